#include "crossnet/patch.hpp"

#include <deque>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace crossnet {

namespace {

Tensor copy_block(const Image& image, int row0, int col0, int rows, int cols) {
  std::vector<real> data(static_cast<std::size_t>(rows) * cols, real(0));
  for (int r = 0; r < rows; ++r) {
    const int ir = row0 + r;
    if (ir < 0 || ir >= image.height) continue;  // outside stays black
    for (int c = 0; c < cols; ++c) {
      const int ic = col0 + c;
      if (ic < 0 || ic >= image.width) continue;
      data[static_cast<std::size_t>(r) * cols + c] = image.at(ir, ic);
    }
  }
  return Tensor::from({rows, cols}, std::move(data));
}

}  // namespace

CrossoverPatch extract_crossover(const Image& image, int row, int col, int long_extent,
                                 int short_extent) {
  if (!image.inside(row, col)) {
    throw std::invalid_argument("patch center (" + std::to_string(row) + "," + std::to_string(col) +
                                ") outside image " + std::to_string(image.height) + "x" +
                                std::to_string(image.width));
  }
  if (long_extent <= short_extent || short_extent < 1) {
    throw std::invalid_argument("patch geometry requires long > short >= 1");
  }
  CrossoverPatch p;
  p.row = row;
  p.col = col;
  p.vertical = copy_block(image, row - long_extent / 2, col - short_extent / 2, long_extent,
                          short_extent);
  p.horizontal = copy_block(image, row - short_extent / 2, col - long_extent / 2, short_extent,
                            long_extent);
  return p;
}

CrossoverPatch extract_square(const Image& image, int row, int col, int size) {
  if (!image.inside(row, col)) {
    throw std::invalid_argument("patch center (" + std::to_string(row) + "," + std::to_string(col) +
                                ") outside image " + std::to_string(image.height) + "x" +
                                std::to_string(image.width));
  }
  CrossoverPatch p;
  p.row = row;
  p.col = col;
  p.vertical = copy_block(image, row - size / 2, col - size / 2, size, size);
  return p;
}

namespace {

constexpr int kUnreached = std::numeric_limits<int>::max();

/// Chebyshev distance to the boundary set (foreground pixels with a
/// 4-adjacent background pixel). kUnreached everywhere when single-class.
std::vector<int> boundary_distance(const Mask& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<int> dist(static_cast<std::size_t>(w) * h, kUnreached);
  std::deque<std::pair<int, int>> queue;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask.at(r, c)) continue;
      const bool edge = (mask.inside(r - 1, c) && !mask.at(r - 1, c)) ||
                        (mask.inside(r + 1, c) && !mask.at(r + 1, c)) ||
                        (mask.inside(r, c - 1) && !mask.at(r, c - 1)) ||
                        (mask.inside(r, c + 1) && !mask.at(r, c + 1));
      if (edge) {
        dist[static_cast<std::size_t>(r) * w + c] = 0;
        queue.push_back({r, c});
      }
    }
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<std::size_t>(r) * w + c];
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        const int rr = r + dr, cc = c + dc;
        if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
        auto& dd = dist[static_cast<std::size_t>(rr) * w + cc];
        if (dd > d + 1) {
          dd = d + 1;
          queue.push_back({rr, cc});
        }
      }
  }
  return dist;
}

}  // namespace

SampleSet sample_training_centers(const Mask& mask, const SamplerConfig& config) {
  if (config.boundary_band < 1 || config.interior_stride < 1 || config.max_stride < 1) {
    throw std::invalid_argument("sampler config values must be >= 1");
  }
  const int w = mask.width, h = mask.height;
  if (w < 1 || h < 1) throw std::invalid_argument("sampler: empty mask extent");
  const int band = config.boundary_band;
  const auto dist = boundary_distance(mask);

  SampleSet out;
  const bool no_boundary = dist[0] == kUnreached &&
                           std::all_of(dist.begin(), dist.end(), [](int d) { return d == kUnreached; });
  if (no_boundary) {
    // Single-class mask: fall back to a plain grid of the one class present.
    out.single_class_warning = true;
    const bool fg = mask.count() > 0;
    const int stride = fg ? config.interior_stride : config.max_stride;
    const int far_band = (config.max_stride + 1) / 2;
    for (int r = 0; r < h; r += stride)
      for (int c = 0; c < w; c += stride) {
        Sample s{r, c, fg ? 1 : 0, fg ? Provenance::interior : Provenance::exterior_band,
                 fg ? 0 : far_band};
        out.samples.push_back(s);
      }
    return out;
  }

  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int d = dist[static_cast<std::size_t>(r) * w + c];
      const bool fg = mask.at(r, c);
      Sample s{r, c, fg ? 1 : 0, Provenance::boundary_band, 0};
      if (d <= band) {
        out.samples.push_back(s);
      } else if (fg) {
        if (r % config.interior_stride == 0 && c % config.interior_stride == 0) {
          s.provenance = Provenance::interior;
          out.samples.push_back(s);
        }
      } else {
        const int k = (d + band - 1) / band;  // distance band index, k >= 2 here
        const int stride = std::min(config.max_stride, 2 * k);
        if (r % stride == 0 && c % stride == 0) {
          s.provenance = Provenance::exterior_band;
          s.band = k;
          out.samples.push_back(s);
        }
      }
    }
  return out;
}

std::string provenance_str(const Sample& sample) {
  switch (sample.provenance) {
    case Provenance::boundary_band:
      return "boundary-band";
    case Provenance::interior:
      return "interior";
    case Provenance::exterior_band:
      return "exterior-band-" + std::to_string(sample.band);
  }
  return "?";
}

void write_sample_csv(const SampleSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "row,col,label,provenance\n";
  for (const auto& s : set.samples) {
    out << s.row << "," << s.col << "," << s.label << "," << provenance_str(s) << "\n";
  }
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

}  // namespace crossnet
