#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crossnet/image.hpp"
#include "crossnet/loss.hpp"
#include "crossnet/network.hpp"
#include "crossnet/patch.hpp"

namespace crossnet {

struct TrainConfig {
  real learning_rate = real(1e-4);
  int epochs = 10;
  int batch_size = 64;
  std::uint64_t seed = 0;
  LossConfig loss;
  bool shuffle = true;
  /// When > 0, deterministically thins background samples so that
  /// n_background <= ratio * n_foreground.
  real background_cap_ratio = 0;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double mean_loss = 0;
  double mean_lpre = 0;
  double mean_lcs = 0;
  std::optional<double> val_dsc;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  Params params;
  TrainHistory history;
};

/// Mini-batch SGD over crossover patches, theta <- theta - lr * grad with the
/// batch-mean gradient. `samples[i]` holds the training centers of
/// `data[i]`. Fully determined by (config.seed, config, data).
TrainResult train(const Network& net, const std::vector<LabeledImage>& data,
                  const std::vector<SampleSet>& samples,
                  const std::vector<LabeledImage>* valset, const TrainConfig& config);

void write_history_csv(const TrainHistory& history, const std::string& path);

/// Seeded Fisher-Yates; identical across platforms.
void shuffle_indices(std::vector<int>& indices, Rng& rng);

}  // namespace crossnet
