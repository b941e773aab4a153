#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crossnet/patch.hpp"

using namespace crossnet;

namespace {

Image random_image(int w, int h, Rng& rng) {
  Image img = Image::filled(w, h);
  for (auto& p : img.pixels) p = rng.uniform();
  return img;
}

Mask disk_mask(int w, int h, int cr, int cc, int radius) {
  Mask m = Mask::filled(w, h, false);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= radius * radius) m.set(r, c, true);
  return m;
}

/// Chebyshev distance to the boundary (foreground pixels 4-adjacent to
/// background), brute force.
std::vector<int> chebyshev_to_boundary(const Mask& mask) {
  std::vector<std::pair<int, int>> boundary;
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(r, c)) continue;
      const bool edge = (mask.inside(r - 1, c) && !mask.at(r - 1, c)) ||
                        (mask.inside(r + 1, c) && !mask.at(r + 1, c)) ||
                        (mask.inside(r, c - 1) && !mask.at(r, c - 1)) ||
                        (mask.inside(r, c + 1) && !mask.at(r, c + 1));
      if (edge) boundary.push_back({r, c});
    }
  std::vector<int> dist(static_cast<std::size_t>(mask.width) * mask.height, 1 << 20);
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      for (const auto& [br, bc] : boundary) {
        const int d = std::max(std::abs(r - br), std::abs(c - bc));
        auto& dd = dist[static_cast<std::size_t>(r) * mask.width + c];
        dd = std::min(dd, d);
      }
  return dist;
}

}  // namespace

TEST_CASE("extract_crossover on a constant image") {
  const Image img = Image::filled(220, 220, real(0.7));
  const CrossoverPatch p = extract_crossover(img, 110, 110, 100, 20);
  CHECK(p.vertical.shape() == std::vector<int>{100, 20});
  CHECK(p.horizontal.shape() == std::vector<int>{20, 100});
  for (std::size_t i = 0; i < p.vertical.size(); ++i) CHECK(p.vertical.at(i) == real(0.7));
  for (std::size_t i = 0; i < p.horizontal.size(); ++i) CHECK(p.horizontal.at(i) == real(0.7));
}

TEST_CASE("extract_crossover zero-fills outside the image") {
  const Image img = Image::filled(30, 30, real(1));
  const CrossoverPatch p = extract_crossover(img, 0, 0, 10, 4);
  // Center at local offset floor(n/2): rows above and columns left are black.
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 4; ++c) CHECK(p.vertical.at(static_cast<std::size_t>(r) * 4 + c) == 0);
  CHECK(p.vertical.at(5 * 4 + 2) == 1);
  for (int c = 0; c < 2; ++c) CHECK(p.vertical.at(5 * 4 + c) == 0);
}

TEST_CASE("extract_crossover overlap squares agree elementwise") {
  Rng rng(3);
  const Image img = random_image(64, 64, rng);
  const int L = 12, S = 4;
  for (int it = 0; it < 10; ++it) {
    const int r = 8 + static_cast<int>(rng.uniform_below(48));
    const int c = 8 + static_cast<int>(rng.uniform_below(48));
    const CrossoverPatch p = extract_crossover(img, r, c, L, S);
    const int off = L / 2 - S / 2;
    for (int i = 0; i < S; ++i)
      for (int j = 0; j < S; ++j) {
        CHECK(p.vertical.at(static_cast<std::size_t>(off + i) * S + j) ==
              p.horizontal.at(static_cast<std::size_t>(i) * L + off + j));
      }
  }
}

TEST_CASE("extract_crossover re-embedding reproduces in-image pixels") {
  Rng rng(5);
  const Image img = random_image(20, 20, rng);
  const int L = 14, S = 6;
  const int r = 2, c = 18;  // clipped on two sides
  const CrossoverPatch p = extract_crossover(img, r, c, L, S);
  const int row0 = r - L / 2, col0 = c - S / 2;
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < S; ++j) {
      const int rr = row0 + i, cc = col0 + j;
      const real v = p.vertical.at(static_cast<std::size_t>(i) * S + j);
      if (img.inside(rr, cc)) {
        CHECK(v == img.at(rr, cc));
      } else {
        CHECK(v == 0);
      }
    }
}

TEST_CASE("extract_crossover rejects bad centers and geometry") {
  const Image img = Image::filled(10, 10, 0);
  CHECK_THROWS_AS(extract_crossover(img, 10, 0, 8, 2), std::invalid_argument);
  CHECK_THROWS_AS(extract_crossover(img, 0, -1, 8, 2), std::invalid_argument);
  CHECK_THROWS_AS(extract_crossover(img, 5, 5, 4, 4), std::invalid_argument);
}

TEST_CASE("sampler covers the boundary band completely") {
  const Mask mask = disk_mask(20, 20, 10, 10, 8);
  SamplerConfig cfg;
  cfg.boundary_band = 2;
  const SampleSet set = sample_training_centers(mask, cfg);
  CHECK_FALSE(set.single_class_warning);

  std::set<std::pair<int, int>> selected;
  for (const auto& s : set.samples) {
    CHECK(mask.inside(s.row, s.col));
    CHECK(selected.insert({s.row, s.col}).second);  // no duplicates
    CHECK(s.label == (mask.at(s.row, s.col) ? 1 : 0));
  }
  const auto dist = chebyshev_to_boundary(mask);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c)
      if (dist[static_cast<std::size_t>(r) * 20 + c] <= 2) {
        CHECK(selected.count({r, c}) == 1);
      }
}

TEST_CASE("sampler exterior follows the stride schedule exactly") {
  const Mask mask = disk_mask(64, 64, 32, 32, 12);
  SamplerConfig cfg;
  cfg.boundary_band = 2;
  cfg.interior_stride = 2;
  cfg.max_stride = 8;
  const SampleSet set = sample_training_centers(mask, cfg);

  const auto dist = chebyshev_to_boundary(mask);
  std::set<std::pair<int, int>> exterior;
  for (const auto& s : set.samples) {
    if (s.provenance == Provenance::exterior_band) exterior.insert({s.row, s.col});
  }
  // Independent recomputation of the schedule.
  std::map<int, std::pair<int, int>> band_counts;  // band -> (selected, pixels)
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      const int d = dist[static_cast<std::size_t>(r) * 64 + c];
      if (mask.at(r, c) || d <= cfg.boundary_band) continue;
      const int k = (d + cfg.boundary_band - 1) / cfg.boundary_band;
      const int stride = std::min(cfg.max_stride, 2 * k);
      const bool expect = r % stride == 0 && c % stride == 0;
      CHECK(exterior.count({r, c}) == (expect ? 1u : 0u));
      auto& [sel, pix] = band_counts[k];
      sel += expect;
      pix += 1;
    }
  // Density is non-increasing where the stride actually grows.
  double prev_density = 2;
  int prev_stride = 0;
  for (const auto& [k, counts] : band_counts) {
    const int stride = std::min(cfg.max_stride, 2 * k);
    if (stride == prev_stride) continue;  // saturated bands share a stride
    const double density = static_cast<double>(counts.first) / counts.second;
    CHECK(density <= prev_density);
    prev_density = density;
    prev_stride = stride;
  }
}

TEST_CASE("sampler handles single-class masks with a warning") {
  SamplerConfig cfg;
  SUBCASE("all background") {
    const SampleSet set = sample_training_centers(Mask::filled(16, 16, false), cfg);
    CHECK(set.single_class_warning);
    CHECK(!set.samples.empty());
    for (const auto& s : set.samples) CHECK(s.label == 0);
  }
  SUBCASE("all foreground") {
    const SampleSet set = sample_training_centers(Mask::filled(16, 16, true), cfg);
    CHECK(set.single_class_warning);
    CHECK(!set.samples.empty());
    for (const auto& s : set.samples) {
      CHECK(s.label == 1);
      CHECK(s.provenance == Provenance::interior);
    }
  }
}

TEST_CASE("sampler is deterministic") {
  const Mask mask = disk_mask(32, 32, 16, 14, 7);
  const SampleSet a = sample_training_centers(mask, {});
  const SampleSet b = sample_training_centers(mask, {});
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].row == b.samples[i].row);
    CHECK(a.samples[i].col == b.samples[i].col);
  }
}

TEST_CASE("thin_sequence keeps even positions") {
  const std::vector<int> v{1, 2, 3, 4, 5};
  CHECK(thin_sequence(v) == std::vector<int>{1, 3, 5});
  CHECK(thin_sequence(std::vector<int>{7}) == std::vector<int>{7});
  CHECK(thin_sequence(std::vector<int>{1, 2, 3, 4, 5, 6}).size() == 3);
  CHECK(thin_sequence(std::vector<int>{}).empty());
}

TEST_CASE("sample CSV serialization") {
  SampleSet set;
  set.samples.push_back({3, 4, 1, Provenance::boundary_band, 0});
  set.samples.push_back({0, 8, 0, Provenance::exterior_band, 3});
  set.samples.push_back({5, 5, 1, Provenance::interior, 0});
  const auto path = std::filesystem::temp_directory_path() / "crossnet_samples_test.csv";
  write_sample_csv(set, path.string());
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() ==
        "row,col,label,provenance\n"
        "3,4,1,boundary-band\n"
        "0,8,0,exterior-band-3\n"
        "5,5,1,interior\n");
  std::filesystem::remove(path);
}
