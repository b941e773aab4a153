#include "crossnet/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace crossnet {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<Eigen::Matrix<real, Eigen::Dynamic, 1>>;
using ConstVecMap = Eigen::Map<const Eigen::Matrix<real, Eigen::Dynamic, 1>>;

thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extent must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::shared_ptr<TensorNode> make_node(std::vector<int> shape) {
  auto node = std::make_shared<TensorNode>();
  node->data.assign(shape_numel(shape), real(0));
  node->shape = std::move(shape);
  return node;
}

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs)
    if (t->node()->requires_grad) return true;
  return false;
}

/// Wire the result into the graph when grad mode is on and an input needs it.
Tensor finish(std::shared_ptr<TensorNode> node, std::initializer_list<const Tensor*> inputs,
              std::function<void(BackwardCtx&)> backprop) {
  if (g_grad_enabled && any_requires_grad(inputs)) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node_ptr());
    node->backprop = std::move(backprop);
  }
  return Tensor::wrap(std::move(node));
}

void check_rank(const Tensor& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(rank) +
                                ", got shape " + shape_str(t.shape()));
  }
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// Rng

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

std::uint64_t Rng::next_u64() { return gen_(); }

std::uint64_t Rng::uniform_below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

real Rng::uniform() {
  return static_cast<real>(next_u64() >> 11) * real(1.0 / 9007199254740992.0);  // 2^-53
}

real Rng::uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

real Rng::normal() {
  // Box-Muller without caching so consumption stays predictable.
  real u1 = uniform();
  while (u1 <= real(0)) u1 = uniform();
  const real u2 = uniform();
  return std::sqrt(real(-2) * std::log(u1)) *
         std::cos(real(2) * real(3.14159265358979323846) * u2);
}

Rng Rng::fork(std::uint64_t stream) const { return Rng(splitmix64(seed_ ^ splitmix64(stream))); }

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto node = make_node(std::move(shape));
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> data, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  if (data.size() != n) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::wrap(std::shared_ptr<TensorNode> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

real Tensor::value() const {
  if (size() != 1) throw std::invalid_argument("value(): tensor is not scalar, shape " + shape_str(shape()));
  return node_->data[0];
}

void Tensor::set_requires_grad(bool v) const { node_->requires_grad = v; }

void Tensor::zero_grad() const {
  node_->grad.assign(node_->data.size(), real(0));
}

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Convolution (valid, stride 1) via im2col + GEMM

Tensor conv2d_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  check_rank(input, 3, "conv2d_valid input");
  check_rank(kernels, 4, "conv2d_valid kernels");
  check_rank(bias, 1, "conv2d_valid bias");
  const int cin = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  const int cout = kernels.shape()[0], kcin = kernels.shape()[1];
  const int kh = kernels.shape()[2], kw = kernels.shape()[3];
  if (kcin != cin) {
    throw std::invalid_argument("conv2d_valid: kernel input maps " + shape_str(kernels.shape()) +
                                " do not match input " + shape_str(input.shape()));
  }
  if (kh > h || kw > w) {
    throw std::invalid_argument("conv2d_valid: kernel " + shape_str(kernels.shape()) +
                                " larger than input " + shape_str(input.shape()));
  }
  if (bias.shape()[0] != cout) {
    throw std::invalid_argument("conv2d_valid: bias " + shape_str(bias.shape()) +
                                " does not match output maps " + std::to_string(cout));
  }
  const int oh = h - kh + 1, ow = w - kw + 1;
  const int k = cin * kh * kw, n = oh * ow;

  // col(k, :) holds the window element (c,ky,kx) for every output position.
  std::vector<real> col(static_cast<std::size_t>(k) * n);
  {
    const real* in = input.data().data();
    std::size_t row = 0;
    for (int c = 0; c < cin; ++c)
      for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx, ++row) {
          real* dst = col.data() + row * n;
          for (int oy = 0; oy < oh; ++oy) {
            const real* src = in + (static_cast<std::size_t>(c) * h + oy + ky) * w + kx;
            std::copy(src, src + ow, dst + static_cast<std::size_t>(oy) * ow);
          }
        }
  }

  auto node = make_node({cout, oh, ow});
  {
    ConstMatMap wm(kernels.data().data(), cout, k);
    ConstMatMap cm(col.data(), k, n);
    MatMap om(node->data.data(), cout, n);
    om.noalias() = wm * cm;
    const real* b = bias.data().data();
    for (int c = 0; c < cout; ++c) om.row(c).array() += b[c];
  }

  auto col_shared = std::make_shared<std::vector<real>>(std::move(col));
  auto in_node = input.node_ptr();
  auto ker_node = kernels.node_ptr();
  auto bias_node = bias.node_ptr();
  return finish(
      std::move(node), {&input, &kernels, &bias},
      [=](BackwardCtx& ctx) {
        ConstMatMap go(ctx.out_grad.data(), cout, n);
        if (ker_node->requires_grad) {
          ConstMatMap cm(col_shared->data(), k, n);
          MatMap gw(ctx.local_grad(ker_node.get()).data(), cout, k);
          gw.noalias() += go * cm.transpose();
        }
        if (bias_node->requires_grad) {
          auto& gb = ctx.local_grad(bias_node.get());
          for (int c = 0; c < cout; ++c) gb[c] += go.row(c).sum();
        }
        if (in_node->requires_grad) {
          std::vector<real> gcol(static_cast<std::size_t>(k) * n);
          {
            ConstMatMap wm(ker_node->data.data(), cout, k);
            MatMap gc(gcol.data(), k, n);
            gc.noalias() = wm.transpose() * go;
          }
          auto& gin = ctx.local_grad(in_node.get());
          std::size_t row = 0;
          for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx, ++row) {
                const real* src = gcol.data() + row * n;
                for (int oy = 0; oy < oh; ++oy) {
                  real* dst = gin.data() + (static_cast<std::size_t>(c) * h + oy + ky) * w + kx;
                  const real* s = src + static_cast<std::size_t>(oy) * ow;
                  for (int ox = 0; ox < ow; ++ox) dst[ox] += s[ox];
                }
              }
        }
      });
}

// ---------------------------------------------------------------------------
// Pooling

Tensor maxpool2x2(const Tensor& input) {
  check_rank(input, 3, "maxpool2x2 input");
  const int c = input.shape()[0], h = input.shape()[1], w = input.shape()[2];
  if (h < 2 || w < 2) {
    throw std::invalid_argument("maxpool2x2: input " + shape_str(input.shape()) +
                                " smaller than the 2x2 window");
  }
  const int oh = h / 2, ow = w / 2;
  auto node = make_node({c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(node->data.size());
  const real* in = input.data().data();
  for (int m = 0; m < c; ++m)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        real best = -std::numeric_limits<real>::infinity();
        std::uint32_t best_idx = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (static_cast<std::size_t>(m) * h + 2 * oy + dy) * w + 2 * ox + dx;
            if (in[idx] > best) {  // strict: first maximum in row-major order wins
              best = in[idx];
              best_idx = static_cast<std::uint32_t>(idx);
            }
          }
        const std::size_t out_idx = (static_cast<std::size_t>(m) * oh + oy) * ow + ox;
        node->data[out_idx] = best;
        (*argmax)[out_idx] = best_idx;
      }

  auto in_node = input.node_ptr();
  return finish(std::move(node), {&input}, [=](BackwardCtx& ctx) {
    auto& gin = ctx.local_grad(in_node.get());
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) gin[(*argmax)[i]] += ctx.out_grad[i];
  });
}

// ---------------------------------------------------------------------------
// Pointwise

namespace {

template <class Fwd, class MakeBwd>
Tensor pointwise_op(const Tensor& x, Fwd fwd, MakeBwd make_bwd) {
  auto node = make_node(x.shape());
  const auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) node->data[i] = fwd(in[i]);
  auto in_node = x.node_ptr();
  auto bwd = make_bwd(in_node, node);
  return finish(std::move(node), {&x}, std::move(bwd));
}

}  // namespace

Tensor relu(const Tensor& x) {
  return pointwise_op(
      x, [](real v) { return v > real(0) ? v : real(0); },
      [](const std::shared_ptr<TensorNode>& in_node, const std::shared_ptr<TensorNode>&) {
        return [in_node](BackwardCtx& ctx) {
          auto& gin = ctx.local_grad(in_node.get());
          for (std::size_t i = 0; i < ctx.out_grad.size(); ++i)
            if (in_node->data[i] > real(0)) gin[i] += ctx.out_grad[i];
        };
      });
}

Tensor sigmoid(const Tensor& x) {
  return pointwise_op(
      x, [](real v) { return real(1) / (real(1) + std::exp(-v)); },
      [](const std::shared_ptr<TensorNode>& in_node, const std::shared_ptr<TensorNode>& out_node) {
        return [in_node, out = out_node.get()](BackwardCtx& ctx) {
          auto& gin = ctx.local_grad(in_node.get());
          for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) {
            const real y = out->data[i];
            gin[i] += ctx.out_grad[i] * y * (real(1) - y);
          }
        };
      });
}

Tensor dropout(const Tensor& x, real p, Rng& rng, bool training) {
  if (p < real(0) || p >= real(1)) {
    throw std::invalid_argument("dropout: rate must satisfy 0 <= p < 1, got " + std::to_string(p));
  }
  if (!training || p == real(0)) return x;
  const real keep_scale = real(1) / (real(1) - p);
  auto mask = std::make_shared<std::vector<real>>(x.size());
  for (auto& m : *mask) m = rng.uniform() < p ? real(0) : keep_scale;  // inverted dropout
  auto node = make_node(x.shape());
  const auto in = x.data();
  for (std::size_t i = 0; i < in.size(); ++i) node->data[i] = in[i] * (*mask)[i];
  auto in_node = x.node_ptr();
  return finish(std::move(node), {&x}, [=](BackwardCtx& ctx) {
    auto& gin = ctx.local_grad(in_node.get());
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) gin[i] += ctx.out_grad[i] * (*mask)[i];
  });
}

// ---------------------------------------------------------------------------
// Dense

Tensor dense(const Tensor& x, const Tensor& weights, const Tensor& bias) {
  check_rank(weights, 2, "dense weights");
  check_rank(bias, 1, "dense bias");
  const int n = weights.shape()[0], m = weights.shape()[1];
  if (static_cast<std::size_t>(m) != x.size()) {
    throw std::invalid_argument("dense: weights " + shape_str(weights.shape()) +
                                " do not match flattened input length " + std::to_string(x.size()));
  }
  if (bias.shape()[0] != n) {
    throw std::invalid_argument("dense: bias " + shape_str(bias.shape()) + " does not match " +
                                std::to_string(n) + " outputs");
  }
  auto node = make_node({n});
  {
    ConstMatMap wm(weights.data().data(), n, m);
    ConstVecMap xv(x.data().data(), m);
    VecMap yv(node->data.data(), n);
    yv.noalias() = wm * xv;
    ConstVecMap bv(bias.data().data(), n);
    yv += bv;
  }
  auto x_node = x.node_ptr();
  auto w_node = weights.node_ptr();
  auto b_node = bias.node_ptr();
  return finish(std::move(node), {&x, &weights, &bias}, [=](BackwardCtx& ctx) {
    ConstVecMap gy(ctx.out_grad.data(), n);
    if (w_node->requires_grad) {
      MatMap gw(ctx.local_grad(w_node.get()).data(), n, m);
      ConstVecMap xv(x_node->data.data(), m);
      gw.noalias() += gy * xv.transpose();
    }
    if (b_node->requires_grad) {
      VecMap gb(ctx.local_grad(b_node.get()).data(), n);
      gb += gy;
    }
    if (x_node->requires_grad) {
      ConstMatMap wm(w_node->data.data(), n, m);
      VecMap gx(ctx.local_grad(x_node.get()).data(), m);
      gx.noalias() += wm.transpose() * gy;
    }
  });
}

// ---------------------------------------------------------------------------
// Squared Frobenius norm of (a - b^T per map)

Tensor frobenius_diff_sq(const Tensor& a, const Tensor& b) {
  check_rank(a, 3, "frobenius_diff_sq a");
  check_rank(b, 3, "frobenius_diff_sq b");
  const int c = a.shape()[0], p = a.shape()[1], q = a.shape()[2];
  if (b.shape()[0] != c || b.shape()[1] != q || b.shape()[2] != p) {
    throw std::invalid_argument("frobenius_diff_sq: " + shape_str(b.shape()) +
                                " is not the per-map transpose of " + shape_str(a.shape()));
  }
  auto node = make_node({1});
  const real* av = a.data().data();
  const real* bv = b.data().data();
  real acc = 0;  // fixed row-major order over a
  for (int m = 0; m < c; ++m)
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < q; ++j) {
        const real d = av[(static_cast<std::size_t>(m) * p + i) * q + j] -
                       bv[(static_cast<std::size_t>(m) * q + j) * p + i];
        acc += d * d;
      }
  node->data[0] = acc;
  auto a_node = a.node_ptr();
  auto b_node = b.node_ptr();
  return finish(std::move(node), {&a, &b}, [=](BackwardCtx& ctx) {
    const real g = ctx.out_grad[0];
    std::vector<real>* ga = a_node->requires_grad ? &ctx.local_grad(a_node.get()) : nullptr;
    std::vector<real>* gb = b_node->requires_grad ? &ctx.local_grad(b_node.get()) : nullptr;
    for (int m = 0; m < c; ++m)
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < q; ++j) {
          const std::size_t ia = (static_cast<std::size_t>(m) * p + i) * q + j;
          const std::size_t ib = (static_cast<std::size_t>(m) * q + j) * p + i;
          const real d = a_node->data[ia] - b_node->data[ib];
          if (ga) (*ga)[ia] += real(2) * g * d;
          if (gb) (*gb)[ib] -= real(2) * g * d;
        }
  });
}

// ---------------------------------------------------------------------------
// Elementwise / structural helpers

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shapes differ, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto node = make_node(a.shape());
  for (std::size_t i = 0; i < node->data.size(); ++i) node->data[i] = a.at(i) + b.at(i);
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return finish(std::move(node), {&a, &b}, [=](BackwardCtx& ctx) {
    if (an->requires_grad) {
      auto& ga = ctx.local_grad(an.get());
      for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) ga[i] += ctx.out_grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = ctx.local_grad(bn.get());
      for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) gb[i] += ctx.out_grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto node = make_node(a.shape());
  for (std::size_t i = 0; i < node->data.size(); ++i) node->data[i] = a.at(i) - b.at(i);
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return finish(std::move(node), {&a, &b}, [=](BackwardCtx& ctx) {
    if (an->requires_grad) {
      auto& ga = ctx.local_grad(an.get());
      for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) ga[i] += ctx.out_grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = ctx.local_grad(bn.get());
      for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) gb[i] -= ctx.out_grad[i];
    }
  });
}

Tensor scale(const Tensor& x, real s) {
  auto node = make_node(x.shape());
  for (std::size_t i = 0; i < node->data.size(); ++i) node->data[i] = x.at(i) * s;
  auto xn = x.node_ptr();
  return finish(std::move(node), {&x}, [=](BackwardCtx& ctx) {
    auto& g = ctx.local_grad(xn.get());
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) g[i] += ctx.out_grad[i] * s;
  });
}

Tensor add_scalar(const Tensor& x, real s) {
  auto node = make_node(x.shape());
  for (std::size_t i = 0; i < node->data.size(); ++i) node->data[i] = x.at(i) + s;
  auto xn = x.node_ptr();
  return finish(std::move(node), {&x}, [=](BackwardCtx& ctx) {
    auto& g = ctx.local_grad(xn.get());
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) g[i] += ctx.out_grad[i];
  });
}

Tensor square(const Tensor& x) {
  auto node = make_node(x.shape());
  for (std::size_t i = 0; i < node->data.size(); ++i) node->data[i] = x.at(i) * x.at(i);
  auto xn = x.node_ptr();
  return finish(std::move(node), {&x}, [=](BackwardCtx& ctx) {
    auto& g = ctx.local_grad(xn.get());
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i)
      g[i] += real(2) * xn->data[i] * ctx.out_grad[i];
  });
}

Tensor log_(const Tensor& x) {
  auto node = make_node(x.shape());
  for (std::size_t i = 0; i < node->data.size(); ++i) {
    if (x.at(i) <= real(0)) {
      throw std::invalid_argument("log_: non-positive input " + std::to_string(x.at(i)));
    }
    node->data[i] = std::log(x.at(i));
  }
  auto xn = x.node_ptr();
  return finish(std::move(node), {&x}, [=](BackwardCtx& ctx) {
    auto& g = ctx.local_grad(xn.get());
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) g[i] += ctx.out_grad[i] / xn->data[i];
  });
}

Tensor clamp(const Tensor& x, real lo, real hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  auto node = make_node(x.shape());
  for (std::size_t i = 0; i < node->data.size(); ++i) node->data[i] = std::clamp(x.at(i), lo, hi);
  auto xn = x.node_ptr();
  return finish(std::move(node), {&x}, [=](BackwardCtx& ctx) {
    auto& g = ctx.local_grad(xn.get());
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i)
      if (xn->data[i] >= lo && xn->data[i] <= hi) g[i] += ctx.out_grad[i];
  });
}

Tensor sum(const Tensor& x) {
  auto node = make_node({1});
  real acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.at(i);
  node->data[0] = acc;
  auto xn = x.node_ptr();
  return finish(std::move(node), {&x}, [=](BackwardCtx& ctx) {
    auto& g = ctx.local_grad(xn.get());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.out_grad[0];
  });
}

Tensor slice_rows_cols(const Tensor& x, int row_begin, int row_end, int col_begin, int col_end) {
  check_rank(x, 3, "slice_rows_cols input");
  const int c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  if (row_begin < 0 || row_end > h || row_begin >= row_end || col_begin < 0 || col_end > w ||
      col_begin >= col_end) {
    throw std::invalid_argument("slice_rows_cols: range [" + std::to_string(row_begin) + "," +
                                std::to_string(row_end) + ")x[" + std::to_string(col_begin) + "," +
                                std::to_string(col_end) + ") invalid for " + shape_str(x.shape()));
  }
  const int sh = row_end - row_begin, sw = col_end - col_begin;
  auto node = make_node({c, sh, sw});
  const real* in = x.data().data();
  for (int m = 0; m < c; ++m)
    for (int i = 0; i < sh; ++i) {
      const real* src = in + (static_cast<std::size_t>(m) * h + row_begin + i) * w + col_begin;
      std::copy(src, src + sw, node->data.data() + (static_cast<std::size_t>(m) * sh + i) * sw);
    }
  auto xn = x.node_ptr();
  return finish(std::move(node), {&x}, [=](BackwardCtx& ctx) {
    auto& g = ctx.local_grad(xn.get());
    for (int m = 0; m < c; ++m)
      for (int i = 0; i < sh; ++i) {
        real* dst = g.data() + (static_cast<std::size_t>(m) * h + row_begin + i) * w + col_begin;
        const real* src = ctx.out_grad.data() + (static_cast<std::size_t>(m) * sh + i) * sw;
        for (int j = 0; j < sw; ++j) dst[j] += src[j];
      }
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  check_rank(a, 3, "concat_rows a");
  check_rank(b, 3, "concat_rows b");
  if (a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[2]) {
    throw std::invalid_argument("concat_rows: incompatible shapes " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const int c = a.shape()[0], ha = a.shape()[1], hb = b.shape()[1], w = a.shape()[2];
  auto node = make_node({c, ha + hb, w});
  for (int m = 0; m < c; ++m) {
    std::copy(a.data().data() + static_cast<std::size_t>(m) * ha * w,
              a.data().data() + static_cast<std::size_t>(m + 1) * ha * w,
              node->data.data() + static_cast<std::size_t>(m) * (ha + hb) * w);
    std::copy(b.data().data() + static_cast<std::size_t>(m) * hb * w,
              b.data().data() + static_cast<std::size_t>(m + 1) * hb * w,
              node->data.data() + static_cast<std::size_t>(m) * (ha + hb) * w +
                  static_cast<std::size_t>(ha) * w);
  }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return finish(std::move(node), {&a, &b}, [=](BackwardCtx& ctx) {
    for (int m = 0; m < c; ++m) {
      const real* src = ctx.out_grad.data() + static_cast<std::size_t>(m) * (ha + hb) * w;
      if (an->requires_grad) {
        auto& ga = ctx.local_grad(an.get());
        real* dst = ga.data() + static_cast<std::size_t>(m) * ha * w;
        for (int i = 0; i < ha * w; ++i) dst[i] += src[i];
      }
      if (bn->requires_grad) {
        auto& gb = ctx.local_grad(bn.get());
        real* dst = gb.data() + static_cast<std::size_t>(m) * hb * w;
        const real* s = src + static_cast<std::size_t>(ha) * w;
        for (int i = 0; i < hb * w; ++i) dst[i] += s[i];
      }
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check_rank(a, 3, "concat_cols a");
  check_rank(b, 3, "concat_cols b");
  if (a.shape()[0] != b.shape()[0] || a.shape()[1] != b.shape()[1]) {
    throw std::invalid_argument("concat_cols: incompatible shapes " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const int c = a.shape()[0], h = a.shape()[1], wa = a.shape()[2], wb = b.shape()[2];
  auto node = make_node({c, h, wa + wb});
  for (int m = 0; m < c; ++m)
    for (int i = 0; i < h; ++i) {
      real* dst = node->data.data() + (static_cast<std::size_t>(m) * h + i) * (wa + wb);
      const real* sa = a.data().data() + (static_cast<std::size_t>(m) * h + i) * wa;
      const real* sb = b.data().data() + (static_cast<std::size_t>(m) * h + i) * wb;
      std::copy(sa, sa + wa, dst);
      std::copy(sb, sb + wb, dst + wa);
    }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return finish(std::move(node), {&a, &b}, [=](BackwardCtx& ctx) {
    for (int m = 0; m < c; ++m)
      for (int i = 0; i < h; ++i) {
        const real* src = ctx.out_grad.data() + (static_cast<std::size_t>(m) * h + i) * (wa + wb);
        if (an->requires_grad) {
          auto& ga = ctx.local_grad(an.get());
          real* dst = ga.data() + (static_cast<std::size_t>(m) * h + i) * wa;
          for (int j = 0; j < wa; ++j) dst[j] += src[j];
        }
        if (bn->requires_grad) {
          auto& gb = ctx.local_grad(bn.get());
          real* dst = gb.data() + (static_cast<std::size_t>(m) * h + i) * wb;
          for (int j = 0; j < wb; ++j) dst[j] += src[wa + j];
        }
      }
  });
}

Tensor concat_vec(const Tensor& a, const Tensor& b) {
  const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
  auto node = make_node({na + nb});
  std::copy(a.data().begin(), a.data().end(), node->data.begin());
  std::copy(b.data().begin(), b.data().end(), node->data.begin() + na);
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return finish(std::move(node), {&a, &b}, [=](BackwardCtx& ctx) {
    if (an->requires_grad) {
      auto& ga = ctx.local_grad(an.get());
      for (int i = 0; i < na; ++i) ga[i] += ctx.out_grad[i];
    }
    if (bn->requires_grad) {
      auto& gb = ctx.local_grad(bn.get());
      for (int i = 0; i < nb; ++i) gb[i] += ctx.out_grad[na + i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reverse pass

void backward(const Tensor& loss, real seed) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be scalar");
  }
  TensorNode* root = loss.node();
  if (!root->requires_grad) {
    throw std::invalid_argument("backward: loss does not require grad (graph not recorded)");
  }

  // Post-order over the recorded graph.
  std::vector<TensorNode*> order;
  {
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        TensorNode* p = node->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  // Per-pass buffers keep repeated backward calls purely additive on the
  // retained grad vectors.
  std::unordered_map<TensorNode*, std::vector<real>> local;
  auto local_of = [&](TensorNode* n) -> std::vector<real>& {
    auto& buf = local[n];
    if (buf.empty()) buf.assign(n->data.size(), real(0));
    return buf;
  };
  local_of(root)[0] = seed;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    auto& g = local_of(node);
    if (node->grad.size() != node->data.size()) node->grad.assign(node->data.size(), real(0));
    for (std::size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
    if (node->backprop) {
      BackwardCtx ctx{g, local_of};
      node->backprop(ctx);
    }
  }
}

// ---------------------------------------------------------------------------
// Finite differences

GradCheckResult finite_diff_check(const std::function<Tensor()>& make_loss,
                                  std::span<const GradProbe> probes, real step, real tolerance) {
  if (step <= real(0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  GradCheckResult result;

  for (const auto& probe : probes) probe.tensor.zero_grad();
  Tensor loss = make_loss();
  if (!std::isfinite(loss.value())) {
    result.finite = false;
    return result;
  }
  backward(loss);

  std::vector<double> analytic;
  analytic.reserve(probes.size());
  for (const auto& probe : probes) analytic.push_back(probe.tensor.grad()[probe.index]);

  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& probe = probes[i];
    real* slot = probe.tensor.mutable_data().data() + probe.index;
    const real saved = *slot;
    *slot = saved + step;
    const real up = [&] {
      NoGradGuard eval;
      return make_loss().value();
    }();
    *slot = saved - step;
    const real down = [&] {
      NoGradGuard eval;
      return make_loss().value();
    }();
    *slot = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      result.finite = false;
      return result;
    }
    const double fd = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * step);
    const double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    if (rel >= result.max_rel_err) {
      result.max_rel_err = rel;
      result.worst_name = probe.name;
      result.worst_index = probe.index;
      result.worst_analytic = analytic[i];
      result.worst_fd = fd;
    }
  }
  result.pass = result.finite && result.max_rel_err < tolerance;
  return result;
}

}  // namespace crossnet
