#include "crossnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <stdexcept>

namespace crossnet {

Image Image::filled(int width, int height, real value) {
  Image img;
  img.width = width;
  img.height = height;
  img.pixels.assign(static_cast<std::size_t>(width) * height, value);
  return img;
}

Mask Mask::filled(int width, int height, bool value) {
  Mask m;
  m.width = width;
  m.height = height;
  m.data.assign(static_cast<std::size_t>(width) * height, value ? 1 : 0);
  return m;
}

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : data) n += v != 0;
  return n;
}

// ---------------------------------------------------------------------------
// PGM

namespace {

int next_pgm_token(std::istream& in) {
  // Skips whitespace and '#' comment lines, then reads one unsigned integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) return -1;
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > 1 << 24) return -1;
    c = in.get();
  }
  return value;
}

std::vector<std::uint8_t> load_pgm_bytes(const std::string& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '5') {
    throw std::runtime_error("'" + path + "' is not a binary PGM (P5) file");
  }
  width = next_pgm_token(in);
  height = next_pgm_token(in);
  const int maxval = next_pgm_token(in);
  if (width <= 0 || height <= 0 || maxval != 255) {
    throw std::runtime_error("'" + path + "' has an unsupported PGM header (need 8-bit, maxval 255)");
  }
  // Exactly one whitespace byte separates the header from the raster.
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw std::runtime_error("'" + path + "' is truncated");
  }
  return bytes;
}

void save_pgm_bytes(const std::vector<std::uint8_t>& bytes, int width, int height,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

}  // namespace

Image load_image(const std::string& path) {
  Image img;
  const auto bytes = load_pgm_bytes(path, img.width, img.height);
  img.pixels.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = real(bytes[i]) / real(255);
  return img;
}

void save_image(const Image& image, const std::string& path) {
  std::vector<std::uint8_t> bytes(image.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const real v = std::clamp(image.pixels[i], real(0), real(1));
    bytes[i] = static_cast<std::uint8_t>(std::lround(v * real(255)));
  }
  save_pgm_bytes(bytes, image.width, image.height, path);
}

Mask load_mask(const std::string& path) {
  Mask m;
  const auto bytes = load_pgm_bytes(path, m.width, m.height);
  m.data.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) m.data[i] = bytes[i] >= 128 ? 1 : 0;
  return m;
}

void save_mask(const Mask& mask, const std::string& path) {
  std::vector<std::uint8_t> bytes(mask.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  save_pgm_bytes(bytes, mask.width, mask.height, path);
}

// ---------------------------------------------------------------------------
// Gaussian blur

std::vector<real> gaussian_blur(const std::vector<real>& field, int width, int height, real sigma) {
  if (sigma <= real(0)) return field;
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<real> kernel(static_cast<std::size_t>(2 * radius + 1));
  real norm = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(real(-0.5) * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (auto& k : kernel) k /= norm;

  std::vector<real> tmp(field.size()), out(field.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      real acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const int xx = std::clamp(x + i, 0, width - 1);
        acc += kernel[i + radius] * field[static_cast<std::size_t>(y) * width + xx];
      }
      tmp[static_cast<std::size_t>(y) * width + x] = acc;
    }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      real acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const int yy = std::clamp(y + i, 0, height - 1);
        acc += kernel[i + radius] * tmp[static_cast<std::size_t>(yy) * width + x];
      }
      out[static_cast<std::size_t>(y) * width + x] = acc;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

constexpr real kPi = real(3.14159265358979323846);

struct BlobShape {
  real cx, cy;        // center, pixel coordinates (col, row)
  real a, b, theta0;  // ellipse axes and rotation
  real harm_amp[3];   // harmonics k = 2..4
  real harm_phase[3];

  real radius(real angle) const {
    const real ca = std::cos(angle - theta0), sa = std::sin(angle - theta0);
    const real base = a * b / std::sqrt(b * b * ca * ca + a * a * sa * sa);
    real scale = 1;
    for (int k = 0; k < 3; ++k) scale += harm_amp[k] * std::cos((k + 2) * angle + harm_phase[k]);
    return base * scale;
  }

  bool contains(int row, int col) const {
    const real dx = col - cx, dy = row - cy;
    const real rho = std::sqrt(dx * dx + dy * dy);
    if (rho == real(0)) return true;
    return rho <= radius(std::atan2(dy, dx));
  }
};

BlobShape draw_blob(Rng& rng, const SyntheticSpec& spec, real cx, real cy) {
  BlobShape blob;
  blob.cx = cx;
  blob.cy = cy;
  blob.a = rng.uniform(spec.radius_min, spec.radius_max);
  blob.b = rng.uniform(spec.radius_min, spec.radius_max);
  blob.theta0 = rng.uniform(0, kPi);
  for (int k = 0; k < 3; ++k) {
    blob.harm_amp[k] = rng.uniform(0, real(0.10) / (k + 1));
    blob.harm_phase[k] = rng.uniform(0, 2 * kPi);
  }
  return blob;
}

/// 4-connected component of `shape` containing (row0, col0).
Mask flood_component(const std::vector<char>& shape, int width, int height, int row0, int col0) {
  Mask out = Mask::filled(width, height, false);
  if (!shape[static_cast<std::size_t>(row0) * width + col0]) return out;
  std::deque<std::pair<int, int>> queue{{row0, col0}};
  out.set(row0, col0, true);
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
    for (int i = 0; i < 4; ++i) {
      const int rr = r + dr[i], cc = c + dc[i];
      if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
      if (!shape[static_cast<std::size_t>(rr) * width + cc] || out.at(rr, cc)) continue;
      out.set(rr, cc, true);
      queue.push_back({rr, cc});
    }
  }
  return out;
}

struct Rect {
  int r0, r1, c0, c1;  // half-open
  bool intersects(const Rect& o) const {
    return r0 < o.r1 && o.r0 < r1 && c0 < o.c1 && o.c0 < c1;
  }
};

LabeledImage render_sample(const SyntheticSpec& spec, Rng& rng, const std::vector<BlobShape>& blobs,
                           const Mask& mask) {
  const int w = spec.width, h = spec.height;

  // Smooth textured background.
  const real base = rng.uniform(real(0.30), real(0.45));
  struct Wave {
    real fx, fy, phase, amp;
  };
  Wave waves[3];
  for (auto& wv : waves) {
    wv.fx = rng.uniform(real(0.5), real(2.0)) / w;
    wv.fy = rng.uniform(real(0.5), real(2.0)) / h;
    wv.phase = rng.uniform(0, 2 * kPi);
    wv.amp = spec.texture_amp * rng.uniform(real(0.5), real(1.0));
  }

  // Directional distractor bars, blob-bright but thin along one axis. They
  // stay clear of every blob so the ground truth is the blob union alone.
  const real contrast = rng.uniform(spec.contrast_min, spec.contrast_max);
  std::vector<Rect> keepout;
  for (const auto& blob : blobs) {
    const int pad = static_cast<int>(std::ceil(std::max(blob.a, blob.b) * real(1.3))) + 3;
    keepout.push_back({static_cast<int>(blob.cy) - pad, static_cast<int>(blob.cy) + pad,
                       static_cast<int>(blob.cx) - pad, static_cast<int>(blob.cx) + pad});
  }
  std::vector<Rect> bars;
  const real mean_diam = blobs.front().a + blobs.front().b;
  for (int axis = 0; axis < 2; ++axis) {
    for (int i = 0; i < spec.bars_per_axis; ++i) {
      for (int attempt = 0; attempt < 30; ++attempt) {
        const int thick =
            static_cast<int>(std::lround(rng.uniform(spec.bar_width_min, spec.bar_width_max)));
        const int length = static_cast<int>(std::lround(mean_diam * rng.uniform(real(0.8), real(1.3))));
        const int bh = axis == 0 ? length : thick;
        const int bw = axis == 0 ? thick : length;
        if (bh >= h - 2 || bw >= w - 2) continue;
        const int r0 = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(h - 1 - bh)));
        const int c0 = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(w - 1 - bw)));
        const Rect rect{r0, r0 + bh, c0, c0 + bw};
        bool clear = true;
        for (const auto& k : keepout) clear = clear && !rect.intersects(k);
        for (const auto& bpr : bars) clear = clear && !rect.intersects(bpr);
        if (!clear) continue;
        bars.push_back(rect);
        break;
      }
    }
  }

  std::vector<real> bright(static_cast<std::size_t>(w) * h, real(0));
  for (std::size_t i = 0; i < bright.size(); ++i) bright[i] = mask.data[i] ? real(1) : real(0);
  for (const auto& bar : bars)
    for (int r = bar.r0; r < bar.r1; ++r)
      for (int c = bar.c0; c < bar.c1; ++c) bright[static_cast<std::size_t>(r) * w + c] = real(1);
  bright = gaussian_blur(bright, w, h, spec.blur_sigma);

  Image img = Image::filled(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      real v = base;
      for (const auto& wv : waves) v += wv.amp * std::cos(2 * kPi * (wv.fx * x + wv.fy * y) + wv.phase);
      v += contrast * bright[static_cast<std::size_t>(y) * w + x];
      if (spec.noise_sigma > real(0)) v += spec.noise_sigma * rng.normal();
      img.at(y, x) = std::clamp(v, real(0), real(1));
    }
  return {std::move(img), mask};
}

LabeledImage generate_one(const SyntheticSpec& spec, Rng rng) {
  const int w = spec.width, h = spec.height;
  const int margin = static_cast<int>(std::ceil(spec.radius_max * real(1.3))) + 2;
  if (2 * margin + 4 >= std::min(w, h)) {
    throw std::invalid_argument("synthetic canvas too small for the configured blob radii");
  }
  if (spec.radius_min < 3 || spec.radius_min > spec.radius_max || spec.blur_sigma < 0 ||
      spec.blobs_min < 1 || spec.blobs_min > spec.blobs_max) {
    throw std::invalid_argument("invalid synthetic spec");
  }

  const int blob_count =
      spec.blobs_min + static_cast<int>(rng.uniform_below(
                           static_cast<std::uint64_t>(spec.blobs_max - spec.blobs_min + 1)));
  std::vector<BlobShape> blobs;
  std::vector<char> shape(static_cast<std::size_t>(w) * h, 0);
  for (int bi = 0; bi < blob_count; ++bi) {
    real cx, cy;
    if (bi == 0) {
      cx = rng.uniform(real(margin), real(w - margin));
      cy = rng.uniform(real(margin), real(h - margin));
    } else {
      // Anchor follow-up blobs on the existing mask so the union stays
      // 4-connected.
      std::vector<std::pair<int, int>> on;
      for (int r = margin; r < h - margin; ++r)
        for (int c = margin; c < w - margin; ++c)
          if (shape[static_cast<std::size_t>(r) * w + c]) on.push_back({r, c});
      if (on.empty()) break;
      const auto [r, c] = on[rng.uniform_below(on.size())];
      cy = static_cast<real>(r);
      cx = static_cast<real>(c);
    }
    const BlobShape blob = draw_blob(rng, spec, cx, cy);
    blobs.push_back(blob);
    const int reach = static_cast<int>(std::ceil(std::max(blob.a, blob.b) * real(1.2))) + 1;
    for (int r = std::max(0, static_cast<int>(cy) - reach);
         r <= std::min(h - 1, static_cast<int>(cy) + reach); ++r)
      for (int c = std::max(0, static_cast<int>(cx) - reach);
           c <= std::min(w - 1, static_cast<int>(cx) + reach); ++c)
        if (blob.contains(r, c)) shape[static_cast<std::size_t>(r) * w + c] = 1;
  }

  const Mask mask = flood_component(shape, w, h, static_cast<int>(blobs.front().cy),
                                    static_cast<int>(blobs.front().cx));
  return render_sample(spec, rng, blobs, mask);
}

}  // namespace

std::vector<LabeledImage> synth_generate(const SyntheticSpec& spec, int count) {
  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(count));
  const Rng root(spec.seed);
  for (int i = 0; i < count; ++i) out.push_back(generate_one(spec, root.fork(static_cast<std::uint64_t>(i))));
  return out;
}

std::vector<LabeledImage> synth_sequence(const SyntheticSpec& spec, int frames) {
  const int w = spec.width, h = spec.height;
  const int margin = static_cast<int>(std::ceil(spec.radius_max * real(1.3))) + 2;
  if (2 * margin + 4 >= std::min(w, h)) {
    throw std::invalid_argument("synthetic canvas too small for the configured blob radii");
  }
  const Rng root(spec.seed);
  Rng rng = root.fork(0x5eccu);

  BlobShape blob = draw_blob(rng, spec, rng.uniform(real(margin), real(w - margin)),
                             rng.uniform(real(margin), real(h - margin)));
  const real step = std::min(real(2), real(std::min(w, h) - 2 * margin) / std::max(1, frames));
  const real dir = rng.uniform(0, 2 * kPi);
  const real dx = step * std::cos(dir), dy = step * std::sin(dir);
  const real drift = rng.uniform(real(0.05), real(0.15));

  std::vector<LabeledImage> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (int f = 0; f < frames; ++f) {
    BlobShape frame_blob = blob;
    frame_blob.cx = std::clamp(blob.cx + f * dx, real(margin), real(w - margin));
    frame_blob.cy = std::clamp(blob.cy + f * dy, real(margin), real(h - margin));
    for (int k = 0; k < 3; ++k) frame_blob.harm_phase[k] = blob.harm_phase[k] + drift * f;

    std::vector<char> shape(static_cast<std::size_t>(w) * h, 0);
    const int reach = static_cast<int>(std::ceil(std::max(blob.a, blob.b) * real(1.2))) + 1;
    for (int r = std::max(0, static_cast<int>(frame_blob.cy) - reach);
         r <= std::min(h - 1, static_cast<int>(frame_blob.cy) + reach); ++r)
      for (int c = std::max(0, static_cast<int>(frame_blob.cx) - reach);
           c <= std::min(w - 1, static_cast<int>(frame_blob.cx) + reach); ++c)
        if (frame_blob.contains(r, c)) shape[static_cast<std::size_t>(r) * w + c] = 1;
    const Mask mask = flood_component(shape, w, h, static_cast<int>(frame_blob.cy),
                                      static_cast<int>(frame_blob.cx));
    Rng frame_rng = root.fork(0x10000u + static_cast<std::uint64_t>(f));
    out.push_back(render_sample(spec, frame_rng, {frame_blob}, mask));
  }
  return out;
}

}  // namespace crossnet
