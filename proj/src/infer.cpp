#include "crossnet/infer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace crossnet {

namespace {

struct Grid {
  int anchor, stride, limit;  // grid coordinates: anchor + k*stride < limit

  int lower(int x) const {
    if (x <= anchor) return anchor;
    return anchor + (x - anchor) / stride * stride;
  }
  int last() const { return lower(limit - 1); }
};

}  // namespace

Prediction predict_image(const Network& net, const Params& params, const Image& image,
                         const Mask* roi, const PredictConfig& config) {
  if (config.stride < 1) throw std::invalid_argument("predict: stride must be >= 1");
  if (roi && (roi->width != image.width || roi->height != image.height)) {
    throw std::invalid_argument("predict: ROI extent does not match the image");
  }
  const int w = image.width, h = image.height;
  auto in_roi = [&](int r, int c) { return roi ? roi->at(r, c) : true; };

  ProbabilityMap map;
  map.width = w;
  map.height = h;
  map.prob.assign(static_cast<std::size_t>(w) * h, real(0));
  map.sampled.assign(static_cast<std::size_t>(w) * h, 0);

  const Grid rows{config.anchor_row % config.stride, config.stride, h};
  const Grid cols{config.anchor_col % config.stride, config.stride, w};

  Rng unused(0);  // eval mode draws nothing
  std::vector<std::pair<int, int>> sampled_pixels;
  for (int r = rows.anchor; r < h; r += rows.stride)
    for (int c = cols.anchor; c < w; c += cols.stride) {
      if (!in_roi(r, c)) continue;
      const CrossoverPatch patch = net.extract_patch(image, r, c);
      const real p = net.forward(params, patch, RunMode::eval, unused).probability();
      map.prob[static_cast<std::size_t>(r) * w + c] = p;
      map.sampled[static_cast<std::size_t>(r) * w + c] = 1;
      sampled_pixels.push_back({r, c});
    }

  // A ROI so small that it misses the grid entirely: evaluate it densely.
  if (sampled_pixels.empty() && roi && roi->count() > 0) {
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        if (!in_roi(r, c)) continue;
        const CrossoverPatch patch = net.extract_patch(image, r, c);
        map.prob[static_cast<std::size_t>(r) * w + c] =
            net.forward(params, patch, RunMode::eval, unused).probability();
        map.sampled[static_cast<std::size_t>(r) * w + c] = 1;
        sampled_pixels.push_back({r, c});
      }
  }

  auto better = [](long long d, int r, int c, long long bd, int br, int bc) {
    if (d != bd) return d < bd;
    if (r != br) return r < br;
    return c < bc;
  };

  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * w + c;
      if (map.sampled[idx] || !in_roi(r, c)) continue;
      long long best_d = std::numeric_limits<long long>::max();
      int best_r = -1, best_c = -1;
      if (!roi) {
        // Without a ROI every grid pixel is sampled, so the nearest one is
        // among the four bounding grid corners.
        const int rl = rows.lower(r), cl = cols.lower(c);
        const int cand_r[2] = {rl, std::min(rl + rows.stride, rows.last())};
        const int cand_c[2] = {cl, std::min(cl + cols.stride, cols.last())};
        for (int rr : cand_r)
          for (int cc : cand_c) {
            const long long d = static_cast<long long>(r - rr) * (r - rr) +
                                static_cast<long long>(c - cc) * (c - cc);
            if (better(d, rr, cc, best_d, best_r, best_c)) {
              best_d = d;
              best_r = rr;
              best_c = cc;
            }
          }
      } else {
        // A ROI can knock out nearby grid pixels; scan all sampled ones.
        for (const auto& [rr, cc] : sampled_pixels) {
          const long long d = static_cast<long long>(r - rr) * (r - rr) +
                              static_cast<long long>(c - cc) * (c - cc);
          if (better(d, rr, cc, best_d, best_r, best_c)) {
            best_d = d;
            best_r = rr;
            best_c = cc;
          }
        }
      }
      if (best_r >= 0) {
        map.prob[idx] = map.prob[static_cast<std::size_t>(best_r) * w + best_c];
      }
    }

  Prediction out;
  out.prob = std::move(map);
  out.mask = Mask::filled(w, h, false);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      out.mask.set(r, c, in_roi(r, c) && out.prob.at(r, c) >= config.threshold);
    }
  return out;
}

void save_probability_pgm(const ProbabilityMap& map, const std::string& path) {
  Image img;
  img.width = map.width;
  img.height = map.height;
  img.pixels = map.prob;
  save_image(img, path);
}

void save_probability_raw(const ProbabilityMap& map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const real v : map.prob) {
    const double d = static_cast<double>(v);
    out.write(reinterpret_cast<const char*>(&d), sizeof(double));
  }
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

}  // namespace crossnet
