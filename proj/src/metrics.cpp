#include "crossnet/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace crossnet {

namespace {

void check_extents(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("mask extents differ: " + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width));
  }
}

/// Largest min squared distance from points of `from` into `to`. Integer
/// arithmetic, exact.
long long directed_max_min_sq(const std::vector<std::pair<int, int>>& from,
                              const std::vector<std::pair<int, int>>& to) {
  long long worst = 0;
  for (const auto& [pr, pc] : from) {
    long long best = std::numeric_limits<long long>::max();
    for (const auto& [qr, qc] : to) {
      const long long dr = pr - qr, dc = pc - qc;
      const long long d = dr * dr + dc * dc;
      if (d < best) best = d;
      if (best == 0) break;
    }
    if (best > worst) worst = best;
  }
  return worst;
}

}  // namespace

std::vector<std::pair<int, int>> boundary_pixels(const Mask& mask) {
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(r, c)) continue;
      const bool edge = !mask.inside(r - 1, c) || !mask.at(r - 1, c) ||
                        !mask.inside(r + 1, c) || !mask.at(r + 1, c) ||
                        !mask.inside(r, c - 1) || !mask.at(r, c - 1) ||
                        !mask.inside(r, c + 1) || !mask.at(r, c + 1);
      if (edge) out.push_back({r, c});
    }
  return out;
}

real dsc(const Mask& pred, const Mask& gt) {
  check_extents(pred, gt);
  std::size_t inter = 0, p = 0, g = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
    inter += a && b;
    p += a;
    g += b;
  }
  if (p + g == 0) return real(1);
  return real(2) * static_cast<real>(inter) / static_cast<real>(p + g);
}

std::optional<real> hausdorff(const Mask& pred, const Mask& gt) {
  check_extents(pred, gt);
  const auto bp = boundary_pixels(pred);
  const auto bg = boundary_pixels(gt);
  if (bp.empty() || bg.empty()) return std::nullopt;
  const long long sq = std::max(directed_max_min_sq(bp, bg), directed_max_min_sq(bg, bp));
  return std::sqrt(static_cast<real>(sq));
}

std::pair<real, real> over_under(const Mask& pred, const Mask& gt) {
  check_extents(pred, gt);
  std::size_t p_only = 0, g_only = 0, uni = 0;
  std::size_t g_total = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
    p_only += a && !b;
    g_only += b && !a;
    uni += a || b;
    g_total += b;
  }
  if (g_total == 0) throw std::invalid_argument("over_under: ground truth mask is empty");
  return {static_cast<real>(p_only) / static_cast<real>(uni),
          static_cast<real>(g_only) / static_cast<real>(uni)};
}

MetricsReport evaluate_masks(const Mask& pred, const Mask& gt) {
  MetricsReport r;
  r.dsc = dsc(pred, gt);
  r.hd = hausdorff(pred, gt);
  const auto [o, u] = over_under(pred, gt);
  r.or_ratio = o;
  r.ur_ratio = u;
  return r;
}

}  // namespace crossnet
