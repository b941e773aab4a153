#pragma once

#include <span>
#include <string>

#include "crossnet/network.hpp"
#include "crossnet/tensor.hpp"

namespace crossnet {

enum class LossKind { full, entropy_only, mse_only, no_end_constraint };

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::full;
  real lambda_cs = real(1);
  real epsilon = real(1e-12);
};

/// Mean binary cross-entropy, predictions clamped to [eps, 1-eps].
Tensor prediction_loss(std::span<const Tensor> y_hat, std::span<const int> y,
                       real epsilon = real(1e-12));

/// Mean over the batch of |Vc - Hc^T|_F^2 - |Ve - He^T|_F^2 (transpose per
/// feature map); no_end_constraint keeps the consistency term only.
Tensor constraint_loss(std::span<const FeatureSlices> slices, const LossConfig& config);

Tensor total_loss(std::span<const Tensor> y_hat, std::span<const int> y,
                  std::span<const FeatureSlices> slices, const LossConfig& config);

/// Per-sample term (batch mean is taken by the caller). `pred_value` and
/// `cs_value` expose the two components for logging.
struct SampleLoss {
  Tensor total;
  real pred_value = 0;
  real cs_value = 0;
};

SampleLoss sample_loss(const Tensor& y_hat, int y, const FeatureSlices& slices,
                       const LossConfig& config);

}  // namespace crossnet
