#include "crossnet/loss.hpp"

#include <stdexcept>

namespace crossnet {

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "full") return LossKind::full;
  if (name == "entropy_only") return LossKind::entropy_only;
  if (name == "mse_only") return LossKind::mse_only;
  if (name == "no_end_constraint") return LossKind::no_end_constraint;
  throw std::invalid_argument("unknown loss kind '" + name + "'");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::full:
      return "full";
    case LossKind::entropy_only:
      return "entropy_only";
    case LossKind::mse_only:
      return "mse_only";
    case LossKind::no_end_constraint:
      return "no_end_constraint";
  }
  return "?";
}

namespace {

void check_label(int y) {
  if (y != 0 && y != 1) throw std::invalid_argument("label must be 0 or 1, got " + std::to_string(y));
}

Tensor bce_term(const Tensor& y_hat, int y, real epsilon) {
  check_label(y);
  if (y_hat.size() != 1) throw std::invalid_argument("prediction must be scalar");
  const Tensor p = clamp(y_hat, epsilon, real(1) - epsilon);
  // -(y log p + (1-y) log(1-p)); one branch per label keeps the graph lean.
  if (y == 1) return scale(log_(p), real(-1));
  return scale(log_(add_scalar(scale(p, real(-1)), real(1))), real(-1));
}

Tensor cs_term(const FeatureSlices& s, const LossConfig& config) {
  if (!s.captured()) {
    throw std::invalid_argument("constraint loss requested but no feature slices were captured");
  }
  const Tensor consistency = frobenius_diff_sq(s.vc, s.hc);
  if (config.kind == LossKind::no_end_constraint) return consistency;
  return sub(consistency, frobenius_diff_sq(s.ve, s.he));
}

Tensor batch_mean(std::vector<Tensor> terms) {
  Tensor acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, real(1) / static_cast<real>(terms.size()));
}

}  // namespace

Tensor prediction_loss(std::span<const Tensor> y_hat, std::span<const int> y, real epsilon) {
  if (y_hat.empty()) throw std::invalid_argument("prediction_loss: empty batch");
  if (y_hat.size() != y.size()) throw std::invalid_argument("prediction_loss: batch sizes differ");
  if (epsilon <= real(0)) throw std::invalid_argument("prediction_loss: epsilon must be positive");
  std::vector<Tensor> terms;
  terms.reserve(y_hat.size());
  for (std::size_t i = 0; i < y_hat.size(); ++i) terms.push_back(bce_term(y_hat[i], y[i], epsilon));
  return batch_mean(std::move(terms));
}

Tensor constraint_loss(std::span<const FeatureSlices> slices, const LossConfig& config) {
  if (slices.empty()) throw std::invalid_argument("constraint_loss: empty batch");
  std::vector<Tensor> terms;
  terms.reserve(slices.size());
  for (const auto& s : slices) terms.push_back(cs_term(s, config));
  return batch_mean(std::move(terms));
}

Tensor total_loss(std::span<const Tensor> y_hat, std::span<const int> y,
                  std::span<const FeatureSlices> slices, const LossConfig& config) {
  switch (config.kind) {
    case LossKind::entropy_only:
      return prediction_loss(y_hat, y, config.epsilon);
    case LossKind::mse_only: {
      if (y_hat.empty()) throw std::invalid_argument("total_loss: empty batch");
      std::vector<Tensor> terms;
      terms.reserve(y_hat.size());
      for (std::size_t i = 0; i < y_hat.size(); ++i) {
        check_label(y[i]);
        terms.push_back(square(add_scalar(y_hat[i], -static_cast<real>(y[i]))));
      }
      return batch_mean(std::move(terms));
    }
    case LossKind::full:
    case LossKind::no_end_constraint: {
      const Tensor pred = prediction_loss(y_hat, y, config.epsilon);
      if (config.lambda_cs == real(0)) return pred;
      return add(pred, scale(constraint_loss(slices, config), config.lambda_cs));
    }
  }
  throw std::invalid_argument("total_loss: unknown loss kind");
}

SampleLoss sample_loss(const Tensor& y_hat, int y, const FeatureSlices& slices,
                       const LossConfig& config) {
  SampleLoss out;
  switch (config.kind) {
    case LossKind::entropy_only:
      out.total = bce_term(y_hat, y, config.epsilon);
      out.pred_value = out.total.value();
      break;
    case LossKind::mse_only:
      check_label(y);
      out.total = square(add_scalar(y_hat, -static_cast<real>(y)));
      out.pred_value = out.total.value();
      break;
    case LossKind::full:
    case LossKind::no_end_constraint: {
      const Tensor pred = bce_term(y_hat, y, config.epsilon);
      out.pred_value = pred.value();
      if (config.lambda_cs == real(0)) {
        out.total = pred;
      } else {
        const Tensor cs = cs_term(slices, config);
        out.cs_value = cs.value();
        out.total = add(pred, scale(cs, config.lambda_cs));
      }
      break;
    }
  }
  return out;
}

}  // namespace crossnet
