#include "crossnet/receptive.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace crossnet {

namespace {

void check_layer_index(const LayerStack& stack, int layer) {
  if (layer < 0 || layer > static_cast<int>(stack.layers.size())) {
    throw std::invalid_argument("layer index " + std::to_string(layer) + " outside stack of " +
                                std::to_string(stack.layers.size()) + " layers");
  }
}

void check_range_within(RowRange r, int extent, const char* what) {
  if (r.start < 1 || r.start > r.end || r.end > extent) {
    throw std::invalid_argument(std::string(what) + ": range [" + std::to_string(r.start) + "," +
                                std::to_string(r.end) + "] outside extent " +
                                std::to_string(extent));
  }
}

}  // namespace

std::vector<Extent> LayerStack::extents() const {
  std::vector<Extent> out;
  out.reserve(layers.size() + 1);
  Extent e{rows, cols};
  if (e.rows < 1 || e.cols < 1) throw std::invalid_argument("layer stack input extent must be positive");
  out.push_back(e);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.kind == LayerKind::conv) {
      e.rows -= l.kh - 1;
      e.cols -= l.kw - 1;
    } else {
      e.rows /= 2;
      e.cols /= 2;
    }
    if (e.rows < 1 || e.cols < 1) {
      throw std::invalid_argument("layer " + std::to_string(i + 1) +
                                  " collapses the extent below 1x1");
    }
    out.push_back(e);
  }
  return out;
}

LayerStack LayerStack::transposed() const {
  LayerStack t;
  t.rows = cols;
  t.cols = rows;
  t.layers.reserve(layers.size());
  for (const auto& l : layers) t.layers.push_back({l.kind, l.kw, l.kh});
  return t;
}

RowRange receptive_rows(const LayerStack& stack, int layer, RowRange r) {
  check_layer_index(stack, layer);
  const auto ext = stack.extents();
  check_range_within(r, ext[layer].rows, "receptive_rows");

  int r1 = r.start, r2 = r.end;
  for (int i = layer; i >= 1; --i) {
    const auto& l = stack.layers[i - 1];
    if (l.kind == LayerKind::conv) {
      r2 = r2 + l.kh - 1;  // exact support of a height-kh valid conv
    } else {
      r1 = 2 * r1 - 1;
      r2 = std::min(2 * r2, ext[i - 1].rows);
    }
  }
  return {std::max(1, r1), std::min(r2, ext[0].rows)};
}

RowRange influence_oracle(const LayerStack& stack, int layer, RowRange r) {
  check_layer_index(stack, layer);
  const auto ext = stack.extents();
  check_range_within(r, ext[layer].rows, "influence_oracle");

  int lo = 0, hi = -1;
  std::vector<char> mask, next;
  for (int p = 1; p <= ext[0].rows; ++p) {
    mask.assign(static_cast<std::size_t>(ext[0].rows), 0);
    mask[p - 1] = 1;
    for (int i = 1; i <= layer; ++i) {
      const auto& l = stack.layers[i - 1];
      const int out_rows = ext[i].rows;
      next.assign(static_cast<std::size_t>(out_rows), 0);
      if (l.kind == LayerKind::conv) {
        for (int o = 0; o < out_rows; ++o)
          for (int dy = 0; dy < l.kh; ++dy)
            if (mask[o + dy]) {
              next[o] = 1;
              break;
            }
      } else {
        for (int o = 0; o < out_rows; ++o) next[o] = mask[2 * o] | mask[2 * o + 1];
      }
      mask.swap(next);
    }
    bool hits = false;
    for (int o = r.start; o <= r.end && !hits; ++o) hits = mask[o - 1];
    if (hits) {
      if (hi < 0) lo = p;
      hi = p;
    }
  }
  if (hi < 0) throw std::logic_error("influence_oracle: empty influence set");
  return {lo, hi};
}

RowRange invert_to_slice(const LayerStack& stack, int layer, RowRange target) {
  check_layer_index(stack, layer);
  const auto ext = stack.extents();
  check_range_within(target, ext[0].rows, "invert_to_slice target");
  const int n = ext[layer].rows;
  if (n < 1) throw std::invalid_argument("invert_to_slice: empty layer output");

  RowRange best{1, 1};
  long best_score = -1;
  for (int r1 = 1; r1 <= n; ++r1)
    for (int r2 = r1; r2 <= n; ++r2) {
      const RowRange rec = receptive_rows(stack, layer, {r1, r2});
      const long score = std::abs(static_cast<long>(rec.start) - target.start) +
                         std::abs(static_cast<long>(rec.end) - target.end);
      if (best_score < 0 || score < best_score ||
          (score == best_score && (r2 - r1 < best.end - best.start ||
                                   (r2 - r1 == best.end - best.start && r1 < best.start)))) {
        best_score = score;
        best = {r1, r2};
      }
    }
  return best;
}

RowRange overlap_along_long_axis(int long_extent, int short_extent) {
  if (long_extent <= short_extent || short_extent < 1) {
    throw std::invalid_argument("patch geometry requires long > short >= 1");
  }
  const int start = long_extent / 2 - short_extent / 2 + 1;
  return {start, start + short_extent - 1};
}

Extent FeatureSliceSpec::ends_extent() const {
  Extent c = center_extent();
  return long_axis_rows ? Extent{2 * c.rows, c.cols} : Extent{c.rows, 2 * c.cols};
}

namespace {

/// One branch: F_c from the overlap via the inverse search, F_e anchored at
/// the extreme feature rows (or columns for the horizontal branch).
FeatureSliceSpec branch_slices(const LayerStack& stack, int layer, RowRange overlap_long,
                               RowRange overlap_short, bool long_axis_rows) {
  const auto ext = stack.extents();
  FeatureSliceSpec s;
  s.layer = layer;
  s.long_axis_rows = long_axis_rows;

  const RowRange along_long = invert_to_slice(long_axis_rows ? stack : stack.transposed(), layer,
                                              overlap_long);
  const RowRange along_short = invert_to_slice(long_axis_rows ? stack.transposed() : stack, layer,
                                               overlap_short);
  const int n = long_axis_rows ? ext[layer].rows : ext[layer].cols;
  const int k = along_long.length();
  const RowRange end_a{1, k};
  const RowRange end_b{n - k + 1, n};
  if (2 * k > n || along_long.start <= k || along_long.end >= n - k + 1) {
    throw std::invalid_argument(
        "crossover-loss layer " + std::to_string(layer) + ": center slice of " +
        std::to_string(k) + " rows does not leave room for disjoint end slices in extent " +
        std::to_string(n));
  }
  if (long_axis_rows) {
    s.center_rows = along_long;
    s.center_cols = along_short;
    s.end_a_rows = end_a;
    s.end_b_rows = end_b;
    s.end_a_cols = s.end_b_cols = along_short;
  } else {
    s.center_cols = along_long;
    s.center_rows = along_short;
    s.end_a_cols = end_a;
    s.end_b_cols = end_b;
    s.end_a_rows = s.end_b_rows = along_short;
  }
  return s;
}

}  // namespace

std::pair<FeatureSliceSpec, FeatureSliceSpec> slice_spec_for_patch(
    const LayerStack& vertical, const LayerStack& horizontal, int patch_long, int patch_short,
    int layer) {
  if (vertical.rows != patch_long || vertical.cols != patch_short ||
      horizontal.rows != patch_short || horizontal.cols != patch_long) {
    throw std::invalid_argument("branch input extents do not match the patch geometry");
  }
  const RowRange overlap_long = overlap_along_long_axis(patch_long, patch_short);
  const RowRange overlap_short{1, patch_short};

  FeatureSliceSpec v = branch_slices(vertical, layer, overlap_long, overlap_short, true);
  FeatureSliceSpec h = branch_slices(horizontal, layer, overlap_long, overlap_short, false);

  const Extent vc = v.center_extent(), hc = h.center_extent();
  if (vc.rows != hc.cols || vc.cols != hc.rows) {
    throw std::invalid_argument("center slices are not transpose-compatible: " +
                                std::to_string(vc.rows) + "x" + std::to_string(vc.cols) + " vs " +
                                std::to_string(hc.rows) + "x" + std::to_string(hc.cols));
  }
  return {v, h};
}

}  // namespace crossnet
