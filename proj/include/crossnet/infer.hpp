#pragma once

#include <string>

#include "crossnet/image.hpp"
#include "crossnet/network.hpp"

namespace crossnet {

/// Per-pixel probability plus whether the pixel was evaluated on the grid or
/// filled from its nearest sampled neighbor.
struct ProbabilityMap {
  int width = 0;
  int height = 0;
  std::vector<real> prob;
  std::vector<std::uint8_t> sampled;  // 1 = evaluated, 0 = filled

  real at(int row, int col) const { return prob[static_cast<std::size_t>(row) * width + col]; }
};

struct PredictConfig {
  int stride = 3;
  real threshold = real(0.5);
  int anchor_row = 0;  // grid pixels satisfy (r - anchor) % stride == 0
  int anchor_col = 0;
};

struct Prediction {
  Mask mask;
  ProbabilityMap prob;
};

/// Evaluates the network at grid pixels inside the ROI and replicates each
/// remaining ROI pixel from its nearest sampled pixel (Euclidean, ties by
/// smaller row then smaller column). Pixels outside the ROI are background
/// with probability 0.
Prediction predict_image(const Network& net, const Params& params, const Image& image,
                         const Mask* roi, const PredictConfig& config);

/// 8-bit grayscale dump, round(255 * p).
void save_probability_pgm(const ProbabilityMap& map, const std::string& path);
/// Raw little-endian float64 values, row-major.
void save_probability_raw(const ProbabilityMap& map, const std::string& path);

}  // namespace crossnet
