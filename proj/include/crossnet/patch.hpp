#pragma once

#include <string>
#include <vector>

#include "crossnet/image.hpp"
#include "crossnet/tensor.hpp"

namespace crossnet {

/// Orthogonal vertical (L x S) / horizontal (S x L) block pair sharing a
/// center pixel. Out-of-image pixels are zero-filled. Coordinates are
/// 0-based; the center sits at local offset floor(n/2) along an axis of
/// length n (one extra pixel before the center when n is even).
struct CrossoverPatch {
  int row = 0;
  int col = 0;
  Tensor vertical;    // [L x S]
  Tensor horizontal;  // [S x L]
  int label = -1;     // 1 foreground, 0 background, -1 unknown
};

CrossoverPatch extract_crossover(const Image& image, int row, int col, int long_extent,
                                 int short_extent);

/// Plain size x size block around the center, same zero-fill rule. Stored in
/// the `vertical` slot; `horizontal` is left empty.
CrossoverPatch extract_square(const Image& image, int row, int col, int size);

enum class Provenance { boundary_band, interior, exterior_band };

struct Sample {
  int row = 0;
  int col = 0;
  int label = 0;
  Provenance provenance = Provenance::boundary_band;
  int band = 0;  // exterior band index k (distance in (k-1)*B .. k*B]
};

struct SampleSet {
  std::vector<Sample> samples;
  bool single_class_warning = false;
};

/// Deterministic grid-based sampler: dense within Chebyshev distance
/// `boundary_band` of the mask boundary on both sides, strided inside, and
/// exterior stride growing with the distance band, min(max_stride, 2*ceil(d/B)).
struct SamplerConfig {
  int boundary_band = 3;
  int interior_stride = 2;
  int max_stride = 8;
};

SampleSet sample_training_centers(const Mask& mask, const SamplerConfig& config);

std::string provenance_str(const Sample& sample);
void write_sample_csv(const SampleSet& set, const std::string& path);

/// Keeps every other element (even positions), preserving order.
template <class T>
std::vector<T> thin_sequence(const std::vector<T>& sequence) {
  std::vector<T> out;
  out.reserve((sequence.size() + 1) / 2);
  for (std::size_t i = 0; i < sequence.size(); i += 2) out.push_back(sequence[i]);
  return out;
}

}  // namespace crossnet
