#pragma once

#include <string>
#include <vector>

#include "crossnet/patch.hpp"
#include "crossnet/receptive.hpp"
#include "crossnet/tensor.hpp"

namespace crossnet {

struct BranchLayer {
  LayerKind kind = LayerKind::conv;
  int kh = 0;
  int kw = 0;
  int maps = 0;  // conv output maps

  static BranchLayer conv(int kh, int kw, int maps) { return {LayerKind::conv, kh, kw, maps}; }
  static BranchLayer pool() { return {LayerKind::pool, 2, 2, 0}; }
};

/// Declarative layer stack of one branch. `crossover_conv` is the 1-based
/// ordinal of the conv layer whose post-activation features feed the
/// constraint loss.
struct BranchSpec {
  int rows = 0;
  int cols = 0;
  std::vector<BranchLayer> layers;
  int crossover_conv = 3;
  int head_units = 500;
  real dropout_rate = real(0.1);

  LayerStack stack() const;
  int conv_count() const;
  /// Stack layer index (1-based over convs and pools) of the crossover conv.
  int crossover_layer_index() const;
  /// Row/column mirror: kernels transposed, extents swapped.
  BranchSpec mirrored() const;
};

enum class Arch { dual, vertical_only, horizontal_only, square };

struct NetworkSpec {
  BranchSpec vertical;
  BranchSpec horizontal;
  int patch_long = 100;
  int patch_short = 20;
  Arch arch = Arch::dual;

  static NetworkSpec from_vertical(BranchSpec vertical, int patch_long, int patch_short);
  static NetworkSpec kidney_cardiac();
  static NetworkSpec breast();
  static NetworkSpec preset(const std::string& name);
  /// Single-branch baseline on size x size patches: preset layout with 3x3
  /// kernels, matched map counts, trailing layers dropped while they do not
  /// fit the extent.
  static NetworkSpec square_baseline(int size, const NetworkSpec& like);

  NetworkSpec with_arch(Arch a) const;
  NetworkSpec with_crossover_conv(int conv_ordinal) const;
};

/// Feature slices of the crossover-loss layers: center (consistency) and
/// concatenated ends (diversity) per branch.
struct FeatureSlices {
  Tensor vc, ve, hc, he;
  bool captured() const { return vc.defined(); }
};

struct Params {
  struct Entry {
    std::string name;
    Tensor tensor;
  };
  std::vector<Entry> entries;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;
  void zero_grad();
  std::size_t total_size() const;
};

enum class RunMode { train, eval };

struct ForwardResult {
  Tensor prob;  // scalar in (0,1)
  FeatureSlices slices;
  real probability() const { return prob.value(); }
};

/// Validated network: extents checked, crossover-loss slices located.
class Network {
 public:
  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  Arch arch() const { return spec_.arch; }
  bool dual() const { return spec_.arch == Arch::dual; }
  const FeatureSliceSpec& vertical_slices() const;
  const FeatureSliceSpec& horizontal_slices() const;

  Params init_params(Rng& rng) const;  // Xavier uniform, zero biases
  void check_params(const Params& params) const;

  CrossoverPatch extract_patch(const Image& image, int row, int col) const;

  /// Runs the branches on one patch. Train mode applies dropout (from `rng`)
  /// and records the graph; eval mode does neither. Slices are captured
  /// post-activation in dual arch only.
  ForwardResult forward(const Params& params, const CrossoverPatch& patch, RunMode mode,
                        Rng& rng) const;

 private:
  NetworkSpec spec_;
  FeatureSliceSpec v_slices_{}, h_slices_{};
  bool has_slices_ = false;
};

Params init_xavier(const Network& net, Rng& rng);

/// Flat binary container of named shaped arrays with a textual manifest.
void save_params(const Params& params, const std::string& path);
Params load_params(const std::string& path);

}  // namespace crossnet
