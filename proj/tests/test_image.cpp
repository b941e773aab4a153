#include <doctest.h>

#include <deque>
#include <filesystem>
#include <fstream>

#include "crossnet/image.hpp"

using namespace crossnet;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const char* name) { return fs::temp_directory_path() / name; }

bool mask_component_count_is_one(const Mask& m) {
  std::vector<char> seen(m.data.size(), 0);
  int components = 0;
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c) {
      if (!m.at(r, c) || seen[static_cast<std::size_t>(r) * m.width + c]) continue;
      ++components;
      std::deque<std::pair<int, int>> q{{r, c}};
      seen[static_cast<std::size_t>(r) * m.width + c] = 1;
      while (!q.empty()) {
        auto [rr, cc] = q.front();
        q.pop_front();
        const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
        for (int i = 0; i < 4; ++i) {
          const int r2 = rr + dr[i], c2 = cc + dc[i];
          if (r2 < 0 || r2 >= m.height || c2 < 0 || c2 >= m.width) continue;
          if (!m.at(r2, c2) || seen[static_cast<std::size_t>(r2) * m.width + c2]) continue;
          seen[static_cast<std::size_t>(r2) * m.width + c2] = 1;
          q.push_back({r2, c2});
        }
      }
    }
  return components == 1;
}

}  // namespace

TEST_CASE("pgm round trip is pixel identical") {
  Image img = Image::filled(5, 3);
  Rng rng(9);
  for (auto& p : img.pixels) p = rng.uniform();
  const auto path = tmp_file("crossnet_roundtrip.pgm");
  save_image(img, path.string());
  const Image back = load_image(path.string());
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  // Quantized to 8 bits on save; a second trip must be lossless.
  save_image(back, path.string());
  const Image again = load_image(path.string());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= real(0.5) / 255);
    CHECK(again.pixels[i] == back.pixels[i]);
  }
  fs::remove(path);
}

TEST_CASE("pgm header arithmetic") {
  const auto path = tmp_file("crossnet_header.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n2 2\n255\n";
    const unsigned char bytes[4] = {0, 85, 170, 255};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  const Image img = load_image(path.string());
  CHECK(img.pixels[0] == 0);
  CHECK(img.pixels[1] == doctest::Approx(1.0 / 3).epsilon(1.0 / 510));
  CHECK(img.pixels[2] == doctest::Approx(2.0 / 3).epsilon(1.0 / 510));
  CHECK(img.pixels[3] == 1);
  fs::remove(path);
}

TEST_CASE("pgm writer emits the exact header") {
  const auto path = tmp_file("crossnet_exact.pgm");
  Image img = Image::filled(3, 2, 1);
  save_image(img, path.string());
  std::ifstream in(path, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(content == std::string("P5\n3 2\n255\n") + std::string(6, static_cast<char>(255)));
  fs::remove(path);
}

TEST_CASE("pgm errors") {
  const auto path = tmp_file("crossnet_bad.pgm");
  SUBCASE("zero-byte file") {
    std::ofstream(path.string(), std::ios::binary);
    CHECK_THROWS_WITH_AS(load_image(path.string()), doctest::Contains("not a binary PGM"),
                         std::runtime_error);
  }
  SUBCASE("bad magic") {
    std::ofstream(path.string(), std::ios::binary) << "P6\n2 2\n255\n....";
    CHECK_THROWS_AS(load_image(path.string()), std::runtime_error);
  }
  SUBCASE("truncated raster") {
    std::ofstream(path.string(), std::ios::binary) << "P5\n4 4\n255\nxy";
    CHECK_THROWS_WITH_AS(load_image(path.string()), doctest::Contains("truncated"),
                         std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(load_image("/nonexistent/nope.pgm"), doctest::Contains("cannot open"),
                         std::runtime_error);
  }
  fs::remove(path);
}

TEST_CASE("mask round trip") {
  Mask m = Mask::filled(4, 4, false);
  m.set(1, 2, true);
  m.set(3, 3, true);
  const auto path = tmp_file("crossnet_mask.pgm");
  save_mask(m, path.string());
  const Mask back = load_mask(path.string());
  CHECK(back.data == m.data);
  fs::remove(path);
}

TEST_CASE("synthetic generation is deterministic") {
  SyntheticSpec spec;
  spec.seed = 99;
  const auto a = synth_generate(spec, 3);
  const auto b = synth_generate(spec, 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(a[i].image.pixels == b[i].image.pixels);
    CHECK(a[i].mask.data == b[i].mask.data);
  }
}

TEST_CASE("synthetic masks are connected, non-empty, bounded") {
  SyntheticSpec spec;
  spec.seed = 4;
  const auto data = synth_generate(spec, 100);
  const double lo = 0.5 * 3.14159265 * spec.radius_min * spec.radius_min;
  const double hi = 2.0 * 3.14159265 * spec.radius_max * spec.radius_max;
  for (const auto& li : data) {
    const auto area = static_cast<double>(li.mask.count());
    CHECK(area >= lo);
    CHECK(area <= hi);
    CHECK(mask_component_count_is_one(li.mask));
    for (const real p : li.image.pixels) {
      CHECK(p >= 0);
      CHECK(p <= 1);
    }
  }
}

TEST_CASE("degenerate spec gives a two-level image") {
  SyntheticSpec spec;
  spec.seed = 12;
  spec.blur_sigma = 0;
  spec.noise_sigma = 0;
  spec.texture_amp = 0;
  spec.contrast_min = spec.contrast_max = real(0.4);
  spec.bars_per_axis = 0;
  const auto data = synth_generate(spec, 2);
  for (const auto& li : data) {
    real inside = -1, outside = -1;
    for (int r = 0; r < li.image.height; ++r)
      for (int c = 0; c < li.image.width; ++c) {
        real& slot = li.mask.at(r, c) ? inside : outside;
        if (slot < 0) slot = li.image.at(r, c);
        CHECK(li.image.at(r, c) == slot);
      }
    CHECK(inside == doctest::Approx(outside + 0.4));
  }
}

TEST_CASE("synthetic sequences drift slowly") {
  SyntheticSpec spec;
  spec.seed = 21;
  const auto frames = synth_sequence(spec, 6);
  REQUIRE(frames.size() == 6);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t j = 0; j < frames[i].mask.data.size(); ++j) {
      inter += frames[i].mask.data[j] && frames[i - 1].mask.data[j];
      uni += frames[i].mask.data[j] || frames[i - 1].mask.data[j];
    }
    CHECK(static_cast<double>(inter) / uni > 0.5);  // small per-frame motion
  }
  const auto again = synth_sequence(spec, 6);
  CHECK(again[3].image.pixels == frames[3].image.pixels);
}

TEST_CASE("gaussian blur with sigma zero is the identity") {
  std::vector<real> field{1, 2, 3, 4, 5, 6};
  CHECK(gaussian_blur(field, 3, 2, 0) == field);
}
