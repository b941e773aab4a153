#include "crossnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace crossnet {

// ---------------------------------------------------------------------------
// Specs

LayerStack BranchSpec::stack() const {
  LayerStack s;
  s.rows = rows;
  s.cols = cols;
  s.layers.reserve(layers.size());
  for (const auto& l : layers) {
    s.layers.push_back(l.kind == LayerKind::conv ? LayerDesc::conv(l.kh, l.kw) : LayerDesc::pool());
  }
  return s;
}

int BranchSpec::conv_count() const {
  int n = 0;
  for (const auto& l : layers) n += l.kind == LayerKind::conv;
  return n;
}

int BranchSpec::crossover_layer_index() const {
  int conv_i = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::conv && ++conv_i == crossover_conv) {
      return static_cast<int>(i) + 1;
    }
  }
  throw std::invalid_argument("crossover conv ordinal " + std::to_string(crossover_conv) +
                              " exceeds the " + std::to_string(conv_count()) + " conv layers");
}

BranchSpec BranchSpec::mirrored() const {
  BranchSpec m = *this;
  m.rows = cols;
  m.cols = rows;
  for (auto& l : m.layers) std::swap(l.kh, l.kw);
  return m;
}

NetworkSpec NetworkSpec::from_vertical(BranchSpec vertical, int patch_long, int patch_short) {
  NetworkSpec spec;
  spec.horizontal = vertical.mirrored();
  spec.vertical = std::move(vertical);
  spec.patch_long = patch_long;
  spec.patch_short = patch_short;
  return spec;
}

NetworkSpec NetworkSpec::kidney_cardiac() {
  BranchSpec v;
  v.rows = 100;
  v.cols = 20;
  v.layers = {
      BranchLayer::conv(5, 3, 32), BranchLayer::pool(),        BranchLayer::conv(3, 2, 64),
      BranchLayer::conv(3, 3, 64), BranchLayer::pool(),        BranchLayer::conv(3, 2, 64),
      BranchLayer::conv(3, 1, 64), BranchLayer::conv(3, 1, 64), BranchLayer::conv(3, 2, 64),
  };
  v.crossover_conv = 3;
  v.head_units = 500;
  return from_vertical(std::move(v), 100, 20);
}

NetworkSpec NetworkSpec::breast() {
  BranchSpec v;
  v.rows = 340;
  v.cols = 68;
  v.layers = {
      BranchLayer::conv(5, 3, 32), BranchLayer::pool(),         BranchLayer::conv(3, 3, 64),
      BranchLayer::conv(3, 2, 64), BranchLayer::pool(),         BranchLayer::conv(3, 2, 64),
      BranchLayer::conv(3, 3, 64), BranchLayer::conv(3, 3, 64), BranchLayer::conv(3, 3, 64),
      BranchLayer::pool(),         BranchLayer::conv(3, 2, 64), BranchLayer::conv(3, 2, 64),
      BranchLayer::conv(3, 1, 64), BranchLayer::conv(3, 2, 64),
  };
  v.crossover_conv = 6;  // middle of the eleven convs
  v.head_units = 500;
  return from_vertical(std::move(v), 340, 68);
}

NetworkSpec NetworkSpec::preset(const std::string& name) {
  if (name == "kidney_cardiac") return kidney_cardiac();
  if (name == "breast") return breast();
  throw std::invalid_argument("unknown preset '" + name + "' (expected kidney_cardiac or breast)");
}

NetworkSpec NetworkSpec::square_baseline(int size, const NetworkSpec& like) {
  BranchSpec v;
  v.rows = size;
  v.cols = size;
  v.head_units = like.vertical.head_units;
  v.dropout_rate = like.vertical.dropout_rate;
  int rows = size, cols = size;
  for (const auto& l : like.vertical.layers) {
    if (l.kind == LayerKind::pool) {
      if (rows / 2 < 1 || cols / 2 < 1) break;
      v.layers.push_back(BranchLayer::pool());
      rows /= 2;
      cols /= 2;
    } else {
      if (rows < 3 || cols < 3) break;  // 3x3 kernel no longer fits
      v.layers.push_back(BranchLayer::conv(3, 3, l.maps));
      rows -= 2;
      cols -= 2;
    }
  }
  if (v.layers.empty() || v.layers.front().kind != LayerKind::conv) {
    throw std::invalid_argument("square baseline of size " + std::to_string(size) +
                                " cannot fit any 3x3 conv layer");
  }
  v.crossover_conv = 1;  // unused: square baselines train without the constraint loss
  NetworkSpec spec = from_vertical(std::move(v), size, size);
  spec.patch_short = size;
  spec.patch_long = size;
  spec.arch = Arch::square;
  return spec;
}

NetworkSpec NetworkSpec::with_arch(Arch a) const {
  NetworkSpec s = *this;
  s.arch = a;
  return s;
}

NetworkSpec NetworkSpec::with_crossover_conv(int conv_ordinal) const {
  NetworkSpec s = *this;
  s.vertical.crossover_conv = conv_ordinal;
  s.horizontal.crossover_conv = conv_ordinal;
  return s;
}

// ---------------------------------------------------------------------------
// Params

Tensor& Params::at(const std::string& name) {
  for (auto& e : entries)
    if (e.name == name) return e.tensor;
  throw std::invalid_argument("missing parameter '" + name + "'");
}

const Tensor& Params::at(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e.tensor;
  throw std::invalid_argument("missing parameter '" + name + "'");
}

bool Params::has(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return true;
  return false;
}

void Params::zero_grad() {
  for (auto& e : entries) e.tensor.zero_grad();
}

std::size_t Params::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.tensor.size();
  return n;
}

// ---------------------------------------------------------------------------
// Network

namespace {

void validate_mirror(const NetworkSpec& spec) {
  const BranchSpec m = spec.vertical.mirrored();
  bool ok = m.rows == spec.horizontal.rows && m.cols == spec.horizontal.cols &&
            m.layers.size() == spec.horizontal.layers.size() &&
            spec.vertical.crossover_conv == spec.horizontal.crossover_conv;
  if (ok) {
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
      const auto &a = m.layers[i], &b = spec.horizontal.layers[i];
      ok = ok && a.kind == b.kind && a.kh == b.kh && a.kw == b.kw && a.maps == b.maps;
    }
  }
  if (!ok) throw std::invalid_argument("horizontal branch is not the mirror of the vertical branch");
}

int last_conv_maps(const BranchSpec& spec) {
  int maps = 0;
  for (const auto& l : spec.layers)
    if (l.kind == LayerKind::conv) maps = l.maps;
  return maps;
}

std::size_t branch_flat_size(const BranchSpec& spec) {
  const auto ext = spec.stack().extents();
  return static_cast<std::size_t>(last_conv_maps(spec)) * ext.back().rows * ext.back().cols;
}

}  // namespace

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  if (spec_.vertical.layers.empty()) throw std::invalid_argument("branch has no layers");
  if (spec_.vertical.head_units < 1) throw std::invalid_argument("head_units must be positive");
  if (spec_.vertical.dropout_rate < real(0) || spec_.vertical.dropout_rate >= real(1)) {
    throw std::invalid_argument("dropout rate must satisfy 0 <= p < 1");
  }
  spec_.vertical.stack().extents();  // throws when an extent collapses

  if (spec_.arch == Arch::square) {
    if (spec_.patch_long != spec_.patch_short || spec_.vertical.rows != spec_.patch_long ||
        spec_.vertical.cols != spec_.patch_long) {
      throw std::invalid_argument("square arch requires a square patch matching the branch extent");
    }
    return;
  }

  validate_mirror(spec_);
  if (spec_.vertical.rows != spec_.patch_long || spec_.vertical.cols != spec_.patch_short) {
    throw std::invalid_argument("vertical branch extent does not match the patch geometry");
  }
  if (spec_.arch == Arch::dual) {
    const int layer = spec_.vertical.crossover_layer_index();
    auto [v, h] = slice_spec_for_patch(spec_.vertical.stack(), spec_.horizontal.stack(),
                                       spec_.patch_long, spec_.patch_short, layer);
    v_slices_ = v;
    h_slices_ = h;
    has_slices_ = true;
  }
}

const FeatureSliceSpec& Network::vertical_slices() const {
  if (!has_slices_) throw std::logic_error("slices are only defined for the dual arch");
  return v_slices_;
}

const FeatureSliceSpec& Network::horizontal_slices() const {
  if (!has_slices_) throw std::logic_error("slices are only defined for the dual arch");
  return h_slices_;
}

namespace {

Tensor xavier_tensor(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const real a = std::sqrt(real(6) / static_cast<real>(fan_in + fan_out));
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<real> data(n);
  for (auto& v : data) v = rng.uniform(-a, a);
  return Tensor::from(std::move(shape), std::move(data), true);
}

void init_branch(Params& params, const BranchSpec& spec, const std::string& prefix, Rng& rng) {
  int cin = 1;
  int conv_i = 0;
  for (const auto& l : spec.layers) {
    if (l.kind != LayerKind::conv) continue;
    ++conv_i;
    const std::string base = prefix + ".conv" + std::to_string(conv_i);
    const int fan_in = cin * l.kh * l.kw;
    const int fan_out = l.maps * l.kh * l.kw;
    params.entries.push_back({base + ".weight", xavier_tensor({l.maps, cin, l.kh, l.kw}, fan_in, fan_out, rng)});
    params.entries.push_back({base + ".bias", Tensor::zeros({l.maps}, true)});
    cin = l.maps;
  }
  const int flat = static_cast<int>(branch_flat_size(spec));
  params.entries.push_back(
      {prefix + ".head.weight", xavier_tensor({spec.head_units, flat}, flat, spec.head_units, rng)});
  params.entries.push_back({prefix + ".head.bias", Tensor::zeros({spec.head_units}, true)});
}

}  // namespace

Params Network::init_params(Rng& rng) const {
  Params params;
  int classifier_in = 0;
  switch (spec_.arch) {
    case Arch::dual:
      init_branch(params, spec_.vertical, "v", rng);
      init_branch(params, spec_.horizontal, "h", rng);
      classifier_in = 2 * spec_.vertical.head_units;
      break;
    case Arch::vertical_only:
    case Arch::square:
      init_branch(params, spec_.vertical, "v", rng);
      classifier_in = spec_.vertical.head_units;
      break;
    case Arch::horizontal_only:
      init_branch(params, spec_.horizontal, "h", rng);
      classifier_in = spec_.horizontal.head_units;
      break;
  }
  params.entries.push_back(
      {"classifier.weight", xavier_tensor({1, classifier_in}, classifier_in, 1, rng)});
  params.entries.push_back({"classifier.bias", Tensor::zeros({1}, true)});
  return params;
}

void Network::check_params(const Params& params) const {
  Rng probe(0);
  const Params expect = init_params(probe);
  if (expect.entries.size() != params.entries.size()) {
    throw std::invalid_argument("parameter container has " + std::to_string(params.entries.size()) +
                                " tensors, expected " + std::to_string(expect.entries.size()));
  }
  for (std::size_t i = 0; i < expect.entries.size(); ++i) {
    const auto& want = expect.entries[i];
    const auto& got = params.entries[i];
    if (want.name != got.name || want.tensor.shape() != got.tensor.shape()) {
      throw std::invalid_argument("parameter " + std::to_string(i) + " is '" + got.name + "' " +
                                  shape_str(got.tensor.shape()) + ", expected '" + want.name +
                                  "' " + shape_str(want.tensor.shape()));
    }
  }
}

Params init_xavier(const Network& net, Rng& rng) { return net.init_params(rng); }

CrossoverPatch Network::extract_patch(const Image& image, int row, int col) const {
  if (spec_.arch == Arch::square) return extract_square(image, row, col, spec_.patch_long);
  return extract_crossover(image, row, col, spec_.patch_long, spec_.patch_short);
}

namespace {

struct BranchOut {
  Tensor head;
  Tensor fc, fe;
};

Tensor block_as_input(const Tensor& block) {
  const auto& s = block.shape();
  std::vector<real> data(block.data().begin(), block.data().end());
  return Tensor::from({1, s[0], s[1]}, std::move(data));
}

BranchOut run_branch(const BranchSpec& spec, const FeatureSliceSpec* slices, const Params& params,
                     const std::string& prefix, const Tensor& block, RunMode mode, Rng& rng) {
  BranchOut out;
  Tensor x = block_as_input(block);
  const bool training = mode == RunMode::train;
  int conv_i = 0;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::pool) {
      x = maxpool2x2(x);
      continue;
    }
    ++conv_i;
    const std::string base = prefix + ".conv" + std::to_string(conv_i);
    x = conv2d_valid(x, params.at(base + ".weight"), params.at(base + ".bias"));
    x = dropout(x, spec.dropout_rate, rng, training);
    x = relu(x);
    if (slices && conv_i == spec.crossover_conv) {
      const auto& s = *slices;
      out.fc = slice_rows_cols(x, s.center_rows.start - 1, s.center_rows.end,
                               s.center_cols.start - 1, s.center_cols.end);
      const Tensor end_a = slice_rows_cols(x, s.end_a_rows.start - 1, s.end_a_rows.end,
                                           s.end_a_cols.start - 1, s.end_a_cols.end);
      const Tensor end_b = slice_rows_cols(x, s.end_b_rows.start - 1, s.end_b_rows.end,
                                           s.end_b_cols.start - 1, s.end_b_cols.end);
      out.fe = s.long_axis_rows ? concat_rows(end_a, end_b) : concat_cols(end_a, end_b);
    }
  }
  out.head = dense(x, params.at(prefix + ".head.weight"), params.at(prefix + ".head.bias"));
  return out;
}

void check_block(const Tensor& block, int rows, int cols, const char* what) {
  if (!block.defined() || block.rank() != 2 || block.shape()[0] != rows || block.shape()[1] != cols) {
    throw std::invalid_argument(std::string(what) + " block does not match the spec extent " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

ForwardResult Network::forward(const Params& params, const CrossoverPatch& patch, RunMode mode,
                               Rng& rng) const {
  std::unique_ptr<NoGradGuard> guard;
  if (mode == RunMode::eval) guard = std::make_unique<NoGradGuard>();

  ForwardResult result;
  Tensor features;
  switch (spec_.arch) {
    case Arch::dual: {
      check_block(patch.vertical, spec_.vertical.rows, spec_.vertical.cols, "vertical");
      check_block(patch.horizontal, spec_.horizontal.rows, spec_.horizontal.cols, "horizontal");
      BranchOut v = run_branch(spec_.vertical, &v_slices_, params, "v", patch.vertical, mode, rng);
      BranchOut h = run_branch(spec_.horizontal, &h_slices_, params, "h", patch.horizontal, mode, rng);
      result.slices = {v.fc, v.fe, h.fc, h.fe};
      features = concat_vec(v.head, h.head);
      break;
    }
    case Arch::vertical_only:
    case Arch::square: {
      check_block(patch.vertical, spec_.vertical.rows, spec_.vertical.cols, "vertical");
      features = run_branch(spec_.vertical, nullptr, params, "v", patch.vertical, mode, rng).head;
      break;
    }
    case Arch::horizontal_only: {
      check_block(patch.horizontal, spec_.horizontal.rows, spec_.horizontal.cols, "horizontal");
      features = run_branch(spec_.horizontal, nullptr, params, "h", patch.horizontal, mode, rng).head;
      break;
    }
  }
  const Tensor logit = dense(features, params.at("classifier.weight"), params.at("classifier.bias"));
  result.prob = sigmoid(logit);
  return result;
}

// ---------------------------------------------------------------------------
// Serialization: textual manifest + raw little-endian payload.

void save_params(const Params& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "CROSSNETPARAMS 1\n";
  out << "dtype " << (sizeof(real) == 8 ? "f64" : "f32") << "\n";
  out << "count " << params.entries.size() << "\n";
  std::size_t offset = 0;
  for (const auto& e : params.entries) {
    out << e.name << " " << e.tensor.rank();
    for (int d : e.tensor.shape()) out << " " << d;
    out << " " << offset << "\n";
    offset += e.tensor.size() * sizeof(real);
  }
  out << "end\n";
  for (const auto& e : params.entries) {
    out.write(reinterpret_cast<const char*>(e.tensor.data().data()),
              static_cast<std::streamsize>(e.tensor.size() * sizeof(real)));
  }
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

Params load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "CROSSNETPARAMS" || version != 1) {
    throw std::runtime_error("'" + path + "' is not a version-1 parameter container");
  }
  std::string key, dtype;
  in >> key >> dtype;
  if (key != "dtype" || (dtype != "f64" && dtype != "f32")) {
    throw std::runtime_error("'" + path + "': malformed dtype line");
  }
  const std::string want = sizeof(real) == 8 ? "f64" : "f32";
  if (dtype != want) {
    throw std::runtime_error("'" + path + "' stores " + dtype + " but this build uses " + want);
  }
  std::size_t count = 0;
  in >> key >> count;
  if (key != "count") throw std::runtime_error("'" + path + "': malformed count line");

  struct Rec {
    std::string name;
    std::vector<int> shape;
    std::size_t offset;
  };
  std::vector<Rec> recs(count);
  std::size_t expected_offset = 0;
  for (auto& r : recs) {
    int rank = 0;
    in >> r.name >> rank;
    if (!in || rank < 1 || rank > 8) throw std::runtime_error("'" + path + "': malformed manifest");
    r.shape.resize(rank);
    std::size_t n = 1;
    for (auto& d : r.shape) {
      in >> d;
      n *= static_cast<std::size_t>(d);
    }
    in >> r.offset;
    if (!in || r.offset != expected_offset) {
      throw std::runtime_error("'" + path + "': manifest offsets are not contiguous");
    }
    expected_offset += n * sizeof(real);
  }
  in >> key;
  if (key != "end") throw std::runtime_error("'" + path + "': manifest not terminated");
  in.get();  // newline before the payload

  Params params;
  for (const auto& r : recs) {
    std::size_t n = 1;
    for (int d : r.shape) n *= static_cast<std::size_t>(d);
    std::vector<real> data(n);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(real)));
    if (static_cast<std::size_t>(in.gcount()) != n * sizeof(real)) {
      throw std::runtime_error("'" + path + "' is truncated");
    }
    params.entries.push_back({r.name, Tensor::from(r.shape, std::move(data), true)});
  }
  return params;
}

}  // namespace crossnet
