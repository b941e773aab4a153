#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "crossnet/image.hpp"

namespace crossnet {

struct MetricsReport {
  real dsc = 0;
  std::optional<real> hd;  // empty when either boundary set is empty
  real or_ratio = 0;
  real ur_ratio = 0;
};

/// 2|P n G| / (|P| + |G|); 1 when both masks are empty.
real dsc(const Mask& pred, const Mask& gt);

/// Symmetric Hausdorff distance between boundary pixel sets (max over both
/// directions of the max-min Euclidean distance). Boundary pixels are mask
/// pixels 4-adjacent to the complement; the outside of the image counts as
/// complement so a mask touching the border keeps a boundary.
std::optional<real> hausdorff(const Mask& pred, const Mask& gt);

/// Union-normalized set differences: OR = |P \ G| / |P u G|,
/// UR = |G \ P| / |P u G|. Rejects an empty ground truth.
std::pair<real, real> over_under(const Mask& pred, const Mask& gt);

MetricsReport evaluate_masks(const Mask& pred, const Mask& gt);

std::vector<std::pair<int, int>> boundary_pixels(const Mask& mask);

}  // namespace crossnet
