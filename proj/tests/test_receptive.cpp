#include <doctest.h>

#include "crossnet/receptive.hpp"
#include "crossnet/tensor.hpp"

using namespace crossnet;

namespace {

LayerStack kidney_vertical_prefix() {
  // The stack in front of the third conv of the kidney preset.
  LayerStack s;
  s.rows = 100;
  s.cols = 20;
  s.layers = {LayerDesc::conv(5, 3), LayerDesc::pool(), LayerDesc::conv(3, 2),
              LayerDesc::conv(3, 3)};
  return s;
}

LayerStack random_stack(Rng& rng) {
  LayerStack s;
  s.rows = 8 + static_cast<int>(rng.uniform_below(57));
  s.cols = 8 + static_cast<int>(rng.uniform_below(57));
  const int depth = 1 + static_cast<int>(rng.uniform_below(6));
  int rows = s.rows, cols = s.cols;
  for (int i = 0; i < depth; ++i) {
    if (rows >= 2 && cols >= 2 && rng.uniform() < real(0.3)) {
      s.layers.push_back(LayerDesc::pool());
      rows /= 2;
      cols /= 2;
    } else {
      const int kh = 1 + static_cast<int>(rng.uniform_below(std::min(7, rows)));
      const int kw = 1 + static_cast<int>(rng.uniform_below(std::min(7, cols)));
      s.layers.push_back(LayerDesc::conv(kh, kw));
      rows -= kh - 1;
      cols -= kw - 1;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("receptive_rows at the input layer is the identity") {
  LayerStack s;
  s.rows = 20;
  s.cols = 20;
  s.layers = {LayerDesc::conv(3, 3)};
  CHECK(receptive_rows(s, 0, {5, 9}) == RowRange{5, 9});
}

TEST_CASE("receptive_rows through conv-pool-conv") {
  LayerStack s;
  s.rows = 14;
  s.cols = 14;
  s.layers = {LayerDesc::conv(3, 3), LayerDesc::pool(), LayerDesc::conv(3, 3)};
  const RowRange r = receptive_rows(s, 3, {2, 3});
  CHECK(r == RowRange{3, 12});
  CHECK(influence_oracle(s, 3, {2, 3}) == r);
}

TEST_CASE("receptive_rows reproduces the kidney overlap region") {
  const LayerStack s = kidney_vertical_prefix();
  CHECK(receptive_rows(s, 4, {21, 24}) == RowRange{41, 60});
  CHECK(influence_oracle(s, 4, {21, 24}) == RowRange{41, 60});
}

TEST_CASE("receptive_rows rejects out-of-extent ranges") {
  const LayerStack s = kidney_vertical_prefix();
  CHECK_THROWS_AS(receptive_rows(s, 4, {44, 45}), std::invalid_argument);
  CHECK_THROWS_AS(receptive_rows(s, 9, {1, 1}), std::invalid_argument);
}

TEST_CASE("influence_oracle on a 1-row kernel is the identity") {
  LayerStack s;
  s.rows = 9;
  s.cols = 9;
  s.layers = {LayerDesc::conv(1, 1)};
  CHECK(influence_oracle(s, 1, {3, 5}) == RowRange{3, 5});
}

TEST_CASE("influence_oracle pool truncation drops the odd row") {
  LayerStack s;
  s.rows = 9;
  s.cols = 9;
  s.layers = {LayerDesc::pool()};
  CHECK(influence_oracle(s, 1, {1, 4}) == RowRange{1, 8});
  CHECK(receptive_rows(s, 1, {1, 4}) == RowRange{1, 8});
}

TEST_CASE("receptive_rows equals the influence oracle on random stacks") {
  Rng rng(2024);
  for (int it = 0; it < 100; ++it) {
    const LayerStack s = random_stack(rng);
    const auto ext = s.extents();
    for (int check = 0; check < 3; ++check) {
      const int layer = static_cast<int>(rng.uniform_below(s.layers.size() + 1));
      const int extent = ext[static_cast<std::size_t>(layer)].rows;
      const int start = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(extent)));
      const int end =
          start + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(extent - start + 1)));
      const RowRange r{start, end};
      CHECK(receptive_rows(s, layer, r) == influence_oracle(s, layer, r));
    }
  }
}

TEST_CASE("enlarging the output range never shrinks the receptive region") {
  Rng rng(77);
  for (int it = 0; it < 30; ++it) {
    const LayerStack s = random_stack(rng);
    const auto ext = s.extents();
    const int layer = static_cast<int>(s.layers.size());
    const int extent = ext.back().rows;
    const int start = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(extent)));
    const int end =
        start + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(extent - start + 1)));
    const RowRange inner = receptive_rows(s, layer, {start, end});
    const RowRange outer = receptive_rows(s, layer, {std::max(1, start - 1), std::min(extent, end + 1)});
    CHECK(outer.start <= inner.start);
    CHECK(outer.end >= inner.end);
  }
}

TEST_CASE("invert_to_slice identity at the input layer") {
  LayerStack s;
  s.rows = 100;
  s.cols = 20;
  s.layers = {LayerDesc::conv(3, 3)};
  CHECK(invert_to_slice(s, 0, {41, 60}) == RowRange{41, 60});
}

TEST_CASE("invert_to_slice finds the exact kidney match") {
  const LayerStack s = kidney_vertical_prefix();
  const RowRange slice = invert_to_slice(s, 4, {41, 60});
  CHECK(slice == RowRange{21, 24});
  CHECK(receptive_rows(s, 4, slice) == RowRange{41, 60});
}

TEST_CASE("invert_to_slice on a single conv hits the closest achievable") {
  LayerStack s;
  s.rows = 10;
  s.cols = 10;
  s.layers = {LayerDesc::conv(3, 3)};
  CHECK(invert_to_slice(s, 1, {1, 1}) == RowRange{1, 1});
  CHECK(receptive_rows(s, 1, {1, 1}) == RowRange{1, 3});
}

TEST_CASE("invert_to_slice achieves the global minimum of the objective") {
  Rng rng(31337);
  for (int it = 0; it < 20; ++it) {
    const LayerStack s = random_stack(rng);
    const auto ext = s.extents();
    const int layer = static_cast<int>(s.layers.size());
    const int t1 = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(s.rows)));
    const int t2 = t1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(s.rows - t1 + 1)));
    const RowRange target{t1, t2};
    const RowRange best = invert_to_slice(s, layer, target);
    const RowRange rec = receptive_rows(s, layer, best);
    const long best_score =
        std::abs(static_cast<long>(rec.start) - t1) + std::abs(static_cast<long>(rec.end) - t2);
    const int extent = ext[static_cast<std::size_t>(layer)].rows;
    for (int r1 = 1; r1 <= extent; ++r1)
      for (int r2 = r1; r2 <= extent; ++r2) {
        const RowRange rr = receptive_rows(s, layer, {r1, r2});
        const long score =
            std::abs(static_cast<long>(rr.start) - t1) + std::abs(static_cast<long>(rr.end) - t2);
        CHECK(score >= best_score);
      }
  }
}

TEST_CASE("slice_spec_for_patch reproduces the kidney slice geometry") {
  LayerStack v = kidney_vertical_prefix();
  const auto [vs, hs] = slice_spec_for_patch(v, v.transposed(), 100, 20, 4);

  CHECK(vs.center_rows == RowRange{21, 24});
  CHECK(vs.center_cols == RowRange{1, 6});
  CHECK(vs.end_a_rows == RowRange{1, 4});
  CHECK(vs.end_b_rows == RowRange{41, 44});
  CHECK(vs.center_extent() == Extent{4, 6});
  CHECK(vs.ends_extent() == Extent{8, 6});

  CHECK(hs.center_extent() == Extent{6, 4});
  CHECK(hs.ends_extent() == Extent{6, 8});
  CHECK(hs.center_cols == RowRange{21, 24});
  CHECK(hs.end_a_cols == RowRange{1, 4});
  CHECK(hs.end_b_cols == RowRange{41, 44});
}

TEST_CASE("slice_spec_for_patch at the input layer is the overlap itself") {
  LayerStack v;
  v.rows = 60;
  v.cols = 20;
  v.layers = {LayerDesc::conv(3, 3)};
  const auto [vs, hs] = slice_spec_for_patch(v, v.transposed(), 60, 20, 0);
  CHECK(vs.center_rows == RowRange{21, 40});
  CHECK(vs.end_a_rows == RowRange{1, 20});
  CHECK(vs.end_b_rows == RowRange{41, 60});
  CHECK(hs.center_cols == RowRange{21, 40});
}

TEST_CASE("slice_spec_for_patch rejects layers whose center slice crowds the ends") {
  // At the input layer of a 3S-long patch the three slices exactly tile the
  // extent; anything longer than the overlap must be rejected.
  LayerStack v;
  v.rows = 50;
  v.cols = 20;
  v.layers = {LayerDesc::conv(3, 3)};
  CHECK_THROWS_AS(slice_spec_for_patch(v, v.transposed(), 50, 20, 0), std::invalid_argument);
}

TEST_CASE("overlap_along_long_axis centering convention") {
  CHECK(overlap_along_long_axis(100, 20) == RowRange{41, 60});
  CHECK(overlap_along_long_axis(340, 68) == RowRange{137, 204});
  CHECK(overlap_along_long_axis(5, 1) == RowRange{3, 3});
  CHECK_THROWS_AS(overlap_along_long_axis(20, 20), std::invalid_argument);
}
