#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace crossnet {

#ifdef CROSSNET_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

/// Seeded generator with platform-independent draws. Distributions are
/// mapped from raw 64-bit output by hand so streams are identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  std::uint64_t uniform_below(std::uint64_t n);  // unbiased integer in [0, n)
  real uniform();                                // [0, 1)
  real uniform(real lo, real hi);
  real normal();                                 // standard normal, Box-Muller

  /// Derive an independent deterministic stream, e.g. one per sample.
  Rng fork(std::uint64_t stream) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

std::uint64_t splitmix64(std::uint64_t x);

struct TensorNode;

/// Context used by a node's backward closure: the gradient flowing into the
/// node plus access to the per-pass local buffers of its parents.
struct BackwardCtx {
  const std::vector<real>& out_grad;
  std::function<std::vector<real>&(TensorNode*)> local_grad;
};

struct TensorNode {
  std::vector<int> shape;
  std::vector<real> data;
  bool requires_grad = false;
  std::vector<real> grad;  // retained; accumulates across backward passes
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(BackwardCtx&)> backprop;

  std::size_t size() const { return data.size(); }
};

/// Dense multi-dimensional array participating in reverse-mode
/// differentiation. Cheap shared handle; copies alias the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<real> data,
                     bool requires_grad = false);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->data.size(); }

  // Handles share the node; the node-mutating calls below are const on the
  // handle, like writing through a shared_ptr.
  std::span<const real> data() const { return node_->data; }
  std::span<real> mutable_data() const { return node_->data; }
  /// Empty until a backward pass has touched this tensor.
  std::span<const real> grad() const { return node_->grad; }

  real value() const;      // scalar tensors only
  real at(std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) const;
  void zero_grad() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }
  static Tensor wrap(std::shared_ptr<TensorNode> node);

 private:
  std::shared_ptr<TensorNode> node_;
};

/// While alive, newly created ops do not record the graph (eval mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

bool grad_enabled();

// Forward operators. All are pure; dropout draws from the explicit rng.
// Shapes: conv input Cin x H x W, kernels Cout x Cin x kh x kw, bias Cout.
Tensor conv2d_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias);
Tensor maxpool2x2(const Tensor& input);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor dropout(const Tensor& x, real p, Rng& rng, bool training);
Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias);
/// sum over maps and entries of (a[c,i,j] - b[c,j,i])^2, row-major order.
Tensor frobenius_diff_sq(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, real s);
Tensor add_scalar(const Tensor& x, real s);
Tensor square(const Tensor& x);
Tensor log_(const Tensor& x);
Tensor clamp(const Tensor& x, real lo, real hi);
Tensor sum(const Tensor& x);

/// Half-open 0-based ranges over the row/col axes of a C x H x W tensor.
Tensor slice_rows_cols(const Tensor& x, int row_begin, int row_end,
                       int col_begin, int col_end);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_vec(const Tensor& a, const Tensor& b);

/// Reverse-mode pass from a scalar loss. Leaf and interior grad buffers
/// accumulate additively across calls; `seed` scales this pass.
void backward(const Tensor& loss, real seed = real(1));

struct GradProbe {
  std::string name;
  Tensor tensor;
  std::size_t index = 0;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  bool finite = true;
  bool pass = false;
  std::string worst_name;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_fd = 0.0;
};

/// Central-difference check of the analytic gradient at the probed
/// parameters. `make_loss` must rebuild the loss from current parameter
/// values and be deterministic (dropout off).
GradCheckResult finite_diff_check(const std::function<Tensor()>& make_loss,
                                  std::span<const GradProbe> probes,
                                  real step, real tolerance);

std::string shape_str(const std::vector<int>& shape);

}  // namespace crossnet
