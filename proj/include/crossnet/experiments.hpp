#pragma once

#include <string>
#include <vector>

#include "crossnet/config.hpp"
#include "crossnet/infer.hpp"
#include "crossnet/metrics.hpp"

namespace crossnet {

struct Dataset {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> test;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Synthetic datasets are regenerated in memory from the seed; manifest
/// datasets are loaded from disk.
Dataset load_dataset(const ExperimentConfig& config);

struct RfcheckReport {
  int stacks = 0;
  int checks = 0;
  int mismatches = 0;
};

struct GradcheckSummary {
  double max_rel_err = 0;
  double tolerance = 0;
  int probes = 0;
  bool pass = false;
};

/// One ablation measurement: mean test DSC of a variant under one seed.
struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double dsc = 0;
};

struct Variant {
  std::string name;
  Arch arch = Arch::dual;
  LossKind loss_kind = LossKind::entropy_only;
  int crossover_conv = 0;  // 0 = config default
  int square_size = 0;     // square arch only
};

std::vector<Variant> ablation_variants(const ExperimentConfig& config);

/// Trains one variant on the shared sample sets and returns its mean test
/// DSC. The combining "v_h_average" row is handled by run_ablation.
double run_variant(const ExperimentConfig& config, const Variant& variant, const Dataset& data,
                   const std::vector<SampleSet>& samples, std::uint64_t seed);

std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const Dataset& data,
                                      const std::vector<SampleSet>& samples,
                                      const std::vector<Variant>& variants);

namespace cmd {

void generate(const ExperimentConfig& config);
void sample(const ExperimentConfig& config);
void train(const ExperimentConfig& config);
void predict(const ExperimentConfig& config);
void eval(const ExperimentConfig& config);
RfcheckReport rfcheck(const ExperimentConfig& config);
GradcheckSummary gradcheck(const ExperimentConfig& config);
void ablate(const ExperimentConfig& config);

}  // namespace cmd

std::string format_real(double value);

}  // namespace crossnet
