#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossnet/image.hpp"
#include "crossnet/loss.hpp"
#include "crossnet/network.hpp"
#include "crossnet/patch.hpp"
#include "crossnet/train.hpp"

namespace crossnet {

/// Bad config document, key, or value. Maps to CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string kind = "synthetic";  // synthetic | manifest
  std::string dir = "data";        // where `generate` writes
  std::string manifest;            // dataset manifest (kind = manifest)
  int count = 50;
  int train_count = 40;
  int test_count = 10;
  SyntheticSpec synth;
};

struct PatchConfig {
  int long_extent = 100;
  int short_extent = 20;
};

struct NetworkConfig {
  std::string preset = "kidney_cardiac";  // kidney_cardiac | breast | custom
  std::string layers;                     // custom: "conv5x3x32,pool,conv3x2x64,..."
  int crossover_conv = 0;                 // 0 = keep the preset default
  int head_units = 500;
  real dropout = real(0.1);
};

struct InferenceUserConfig {
  int stride = 3;
  real threshold = real(0.5);
  std::string roi;  // optional mask path applied to every image
  bool raw_dump = false;
};

struct AblateConfig {
  std::string variants = "all";  // all | squares | singles | losses | layer_sweep (comma list)
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  int jobs = 1;
  int epochs = 0;  // 0 = [train] epochs
};

struct TrainUserConfig {
  real learning_rate = real(1e-4);
  int epochs = 10;
  int batch_size = 64;
  std::uint64_t seed = 1;
  bool shuffle = true;
  real background_cap = 0;
};

struct LossUserConfig {
  std::string kind = "full";
  real lambda = real(1);
  real epsilon = real(1e-12);
};

/// Flat key=value document with [section] headers, '#' comments, strict
/// unknown-key rejection.
struct ExperimentConfig {
  DataConfig data;
  PatchConfig patch;
  NetworkConfig network;
  SamplerConfig sampler;
  TrainUserConfig train;
  LossUserConfig loss;
  InferenceUserConfig inference;
  AblateConfig ablate;
  std::string output_dir = "out";

  static ExperimentConfig parse_file(const std::string& path);
  static ExperimentConfig parse_string(const std::string& text);
  /// "section.key=value", same validation as the file parser.
  void apply_override(const std::string& assignment);

  NetworkSpec network_spec() const;
  TrainConfig train_config() const;
  LossConfig loss_config() const;
};

std::vector<BranchLayer> parse_layer_list(const std::string& text);

}  // namespace crossnet
