#pragma once

#include <utility>
#include <vector>

namespace crossnet {

/// Inclusive 1-based index range (rows of a feature map or of the input).
struct RowRange {
  int start = 1;
  int end = 1;

  int length() const { return end - start + 1; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

enum class LayerKind { conv, pool };

/// Geometry-only layer descriptor; pooling is fixed 2x2 stride 2,
/// convolution is valid with stride 1.
struct LayerDesc {
  LayerKind kind = LayerKind::conv;
  int kh = 0;
  int kw = 0;

  static LayerDesc conv(int kh, int kw) { return {LayerKind::conv, kh, kw}; }
  static LayerDesc pool() { return {LayerKind::pool, 2, 2}; }
};

struct Extent {
  int rows = 0;
  int cols = 0;
  friend bool operator==(const Extent&, const Extent&) = default;
};

struct LayerStack {
  std::vector<LayerDesc> layers;
  int rows = 0;  // input extent
  int cols = 0;

  /// Extent after each layer; index 0 is the input itself. Throws if any
  /// intermediate extent collapses below 1.
  std::vector<Extent> extents() const;
  LayerStack transposed() const;
};

/// Exact input-row support of output rows [r.start, r.end] at layer `layer`
/// (0 = the input itself), by the backward recurrence:
/// conv(kh): R2 <- R2 + kh - 1; pool: [R1, R2] <- [2 R1 - 1, min(2 R2, rows in)].
RowRange receptive_rows(const LayerStack& stack, int layer, RowRange r);

/// Brute-force check: forward-propagates an "influences" mask per input row
/// and returns the tight input range reaching [r.start, r.end].
RowRange influence_oracle(const LayerStack& stack, int layer, RowRange r);

/// Feature-row range [r1, r2] at `layer` whose receptive rows are closest to
/// `target` in endpoint L1 distance; ties prefer the narrower, then the
/// topmost slice. Exhaustive search.
RowRange invert_to_slice(const LayerStack& stack, int layer, RowRange target);

/// Row/column ranges of the center slice F_c and the two end slices F_e in
/// one branch's crossover-loss layer.
struct FeatureSliceSpec {
  int layer = 0;              // stack layer index of the crossover-loss conv
  bool long_axis_rows = true; // vertical branch: ends stack along rows
  RowRange center_rows, center_cols;
  RowRange end_a_rows, end_a_cols;
  RowRange end_b_rows, end_b_cols;

  /// rows x cols of the F_c block.
  Extent center_extent() const { return {center_rows.length(), center_cols.length()}; }
  /// rows x cols of the concatenated F_e block.
  Extent ends_extent() const;
};

/// Locates F_c (receptive region closest to the patch overlap) and the two
/// F_e end slices for both branches of an L x S / S x L crossover pair.
std::pair<FeatureSliceSpec, FeatureSliceSpec> slice_spec_for_patch(
    const LayerStack& vertical, const LayerStack& horizontal, int patch_long,
    int patch_short, int layer);

/// 1-based inclusive range of the overlap along the long axis of a block of
/// length `long_extent` (center pixel convention: index long/2 + 1).
RowRange overlap_along_long_axis(int long_extent, int short_extent);

}  // namespace crossnet
