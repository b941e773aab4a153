#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crossnet/tensor.hpp"

namespace crossnet {

/// Grayscale image, row-major, values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<real> pixels;

  real at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  real& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  bool inside(int row, int col) const { return row >= 0 && row < height && col >= 0 && col < width; }

  static Image filled(int width, int height, real value = real(0));
};

/// Binary mask, row-major, values 0/1. Stored on disk as 8-bit PGM {0, 255}.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  bool at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col] != 0; }
  void set(int row, int col, bool v) { data[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0; }
  bool inside(int row, int col) const { return row >= 0 && row < height && col >= 0 && col < width; }
  std::size_t count() const;

  static Mask filled(int width, int height, bool value = false);
};

// Binary PGM (P5, 8-bit). Loads normalize to [0,1]; saves emit
// "P5\n<w> <h>\n255\n" followed by row-major raw bytes round(255*v).
Image load_image(const std::string& path);
void save_image(const Image& image, const std::string& path);
Mask load_mask(const std::string& path);
void save_mask(const Mask& mask, const std::string& path);

/// Seeded generator of compact bright blobs on a textured background.
/// `bars_per_axis` adds blob-bright rectangular streaks (one family per
/// direction) that are visually ambiguous from a single direction only.
struct SyntheticSpec {
  int width = 128;
  int height = 128;
  int blobs_min = 1;
  int blobs_max = 1;
  real radius_min = 8;
  real radius_max = 22;
  real blur_sigma = real(1.0);
  real contrast_min = real(0.25);
  real contrast_max = real(0.5);
  real noise_sigma = real(0.03);
  std::uint64_t seed = 0;
  real texture_amp = real(0.06);
  int bars_per_axis = 2;
  real bar_width_min = 3;
  real bar_width_max = 6;
};

struct LabeledImage {
  Image image;
  Mask mask;
};

/// Pure function of (spec, index): element i is identical across calls and
/// independent of `count`.
std::vector<LabeledImage> synth_generate(const SyntheticSpec& spec, int count);

/// A single blob slowly translating and deforming across frames.
std::vector<LabeledImage> synth_sequence(const SyntheticSpec& spec, int frames);

/// Separable Gaussian blur with edge replication; sigma 0 is the identity.
std::vector<real> gaussian_blur(const std::vector<real>& field, int width, int height, real sigma);

}  // namespace crossnet
