#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "crossnet/network.hpp"

using namespace crossnet;

namespace {

Image noise_image(int w, int h, std::uint64_t seed) {
  Image img = Image::filled(w, h);
  Rng rng(seed);
  for (auto& p : img.pixels) p = rng.uniform();
  return img;
}

void zero_all(Params& params) {
  for (auto& e : params.entries) {
    auto d = e.tensor.mutable_data();
    std::fill(d.begin(), d.end(), real(0));
  }
}

}  // namespace

TEST_CASE("kidney preset reproduces the documented geometry") {
  const NetworkSpec spec = NetworkSpec::kidney_cardiac();
  CHECK(spec.vertical.conv_count() == 7);
  CHECK(spec.patch_long == 100);
  CHECK(spec.patch_short == 20);

  const auto ext = spec.vertical.stack().extents();
  CHECK(ext[4] == Extent{44, 6});   // conv3 output per map
  CHECK(ext.back() == Extent{14, 1});

  const Network net{spec};
  const auto& vs = net.vertical_slices();
  const auto& hs = net.horizontal_slices();
  CHECK(vs.center_extent() == Extent{4, 6});
  CHECK(vs.ends_extent() == Extent{8, 6});
  CHECK(hs.center_extent() == Extent{6, 4});
  CHECK(hs.ends_extent() == Extent{6, 8});
}

TEST_CASE("breast preset satisfies the eleven-conv three-pool layout") {
  const NetworkSpec spec = NetworkSpec::breast();
  CHECK(spec.vertical.conv_count() == 11);
  int pools = 0;
  for (const auto& l : spec.vertical.layers) pools += l.kind == LayerKind::pool;
  CHECK(pools == 3);
  CHECK(spec.vertical.crossover_conv == 6);
  CHECK(spec.patch_long == 340);
  CHECK(spec.patch_short == 68);

  const Network net{spec};
  const auto& vs = net.vertical_slices();
  const auto& hs = net.horizontal_slices();
  // Transpose compatibility is what makes the constraint loss well-formed.
  CHECK(vs.center_extent().rows == hs.center_extent().cols);
  CHECK(vs.center_extent().cols == hs.center_extent().rows);
  CHECK(vs.ends_extent().rows == hs.ends_extent().cols);
  // Exact receptive match of the overlap for this layout.
  const LayerStack stack = spec.vertical.stack();
  CHECK(receptive_rows(stack, spec.vertical.crossover_layer_index(),
                       {vs.center_rows.start, vs.center_rows.end}) == RowRange{137, 204});
}

TEST_CASE("horizontal branch must mirror the vertical branch") {
  NetworkSpec spec = NetworkSpec::kidney_cardiac();
  spec.horizontal.layers[0].kh = 4;
  CHECK_THROWS_AS(Network{spec}, std::invalid_argument);
}

TEST_CASE("xavier bound for a 1x1 kernel with one map each way") {
  BranchSpec v;
  v.rows = 8;
  v.cols = 4;
  v.layers = {BranchLayer::conv(1, 1, 1)};
  v.crossover_conv = 1;
  v.head_units = 2;
  NetworkSpec spec = NetworkSpec::from_vertical(std::move(v), 8, 4);
  spec.arch = Arch::vertical_only;
  const Network net{spec};
  Rng rng(3);
  const Params params = net.init_params(rng);
  const Tensor& w = params.at("v.conv1.weight");
  CHECK(std::abs(w.at(0)) < std::sqrt(3.0));  // a = sqrt(6 / (1 + 1))
}

TEST_CASE("xavier draws have the advertised variance") {
  BranchSpec v;
  v.rows = 12;
  v.cols = 12;
  v.layers = {BranchLayer::conv(3, 3, 1)};
  v.crossover_conv = 1;
  v.head_units = 600;  // 600 x 100 weight matrix: 60k draws
  NetworkSpec spec = NetworkSpec::from_vertical(std::move(v), 12, 12);
  spec.arch = Arch::square;
  spec.patch_long = spec.patch_short = 12;
  const Network net{spec};
  Rng rng(7);
  const Params params = net.init_params(rng);
  const Tensor& w = params.at("v.head.weight");
  double sum = 0, sum_sq = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    sum += w.at(i);
    sum_sq += w.at(i) * w.at(i);
  }
  const double n = static_cast<double>(w.size());
  const double var = sum_sq / n - (sum / n) * (sum / n);
  const double expected = 2.0 / (100 + 600);
  CHECK(var == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("same seed gives identical parameters") {
  const Network net{NetworkSpec::kidney_cardiac()};
  Rng a(5), b(5);
  const Params pa = net.init_params(a);
  const Params pb = net.init_params(b);
  REQUIRE(pa.entries.size() == pb.entries.size());
  for (std::size_t i = 0; i < pa.entries.size(); ++i) {
    CHECK(pa.entries[i].tensor.data().data() != pb.entries[i].tensor.data().data());
    CHECK(std::equal(pa.entries[i].tensor.data().begin(), pa.entries[i].tensor.data().end(),
                     pb.entries[i].tensor.data().begin()));
  }
}

TEST_CASE("all-zero parameters give probability one half") {
  const Network net{NetworkSpec::kidney_cardiac()};
  Rng rng(1);
  Params params = net.init_params(rng);
  zero_all(params);
  const Image img = noise_image(128, 128, 2);
  const CrossoverPatch patch = net.extract_patch(img, 64, 64);
  Rng fwd(0);
  CHECK(net.forward(params, patch, RunMode::eval, fwd).probability() == doctest::Approx(0.5));
}

TEST_CASE("forward captures the documented slice shapes") {
  const Network net{NetworkSpec::kidney_cardiac()};
  Rng rng(1);
  const Params params = net.init_params(rng);
  const Image img = noise_image(128, 128, 3);
  const CrossoverPatch patch = net.extract_patch(img, 64, 64);
  Rng fwd(0);
  const ForwardResult out = net.forward(params, patch, RunMode::eval, fwd);
  CHECK(out.slices.vc.shape() == std::vector<int>{64, 4, 6});
  CHECK(out.slices.ve.shape() == std::vector<int>{64, 8, 6});
  CHECK(out.slices.hc.shape() == std::vector<int>{64, 6, 4});
  CHECK(out.slices.he.shape() == std::vector<int>{64, 6, 8});
  CHECK(out.probability() > 0);
  CHECK(out.probability() < 1);
}

TEST_CASE("slice capture equals an independent recomputation") {
  const Network net{NetworkSpec::kidney_cardiac()};
  Rng rng(4);
  const Params params = net.init_params(rng);
  const Image img = noise_image(128, 128, 5);
  const CrossoverPatch patch = net.extract_patch(img, 70, 50);
  Rng fwd(0);
  const ForwardResult out = net.forward(params, patch, RunMode::eval, fwd);

  // Recompute the vertical branch by hand up to the crossover conv.
  std::vector<real> block(patch.vertical.data().begin(), patch.vertical.data().end());
  Tensor x = Tensor::from({1, 100, 20}, std::move(block));
  int conv_i = 0;
  for (const auto& l : net.spec().vertical.layers) {
    if (l.kind == LayerKind::pool) {
      x = maxpool2x2(x);
      continue;
    }
    ++conv_i;
    const std::string base = "v.conv" + std::to_string(conv_i);
    x = relu(conv2d_valid(x, params.at(base + ".weight"), params.at(base + ".bias")));
    if (conv_i == net.spec().vertical.crossover_conv) break;
  }
  const auto& vs = net.vertical_slices();
  const Tensor fc = slice_rows_cols(x, vs.center_rows.start - 1, vs.center_rows.end,
                                    vs.center_cols.start - 1, vs.center_cols.end);
  REQUIRE(fc.size() == out.slices.vc.size());
  for (std::size_t i = 0; i < fc.size(); ++i) CHECK(fc.at(i) == out.slices.vc.at(i));
}

TEST_CASE("eval forward is deterministic") {
  const Network net{NetworkSpec::kidney_cardiac()};
  Rng rng(6);
  const Params params = net.init_params(rng);
  const Image img = noise_image(128, 128, 7);
  const CrossoverPatch patch = net.extract_patch(img, 60, 80);
  Rng f1(11), f2(22);  // eval must not consume randomness
  CHECK(net.forward(params, patch, RunMode::eval, f1).probability() ==
        net.forward(params, patch, RunMode::eval, f2).probability());
}

TEST_CASE("forward rejects mismatched patch extents") {
  const Network net{NetworkSpec::kidney_cardiac()};
  Rng rng(1);
  const Params params = net.init_params(rng);
  CrossoverPatch patch;
  patch.vertical = Tensor::zeros({50, 20});
  patch.horizontal = Tensor::zeros({20, 50});
  Rng fwd(0);
  CHECK_THROWS_AS(net.forward(params, patch, RunMode::eval, fwd), std::invalid_argument);
}

TEST_CASE("mirrored parameters on transposed patches give the same probability") {
  const Network net{NetworkSpec::kidney_cardiac()};
  Rng rng(8);
  const Params params = net.init_params(rng);

  // Mirror: swap branches, transpose kernels, permute flatten orders.
  Params mirrored;
  auto transpose_kernels = [](const Tensor& w) {
    const auto& s = w.shape();
    std::vector<real> data(w.size());
    for (int o = 0; o < s[0]; ++o)
      for (int i = 0; i < s[1]; ++i)
        for (int r = 0; r < s[2]; ++r)
          for (int c = 0; c < s[3]; ++c) {
            data[((static_cast<std::size_t>(o) * s[1] + i) * s[3] + c) * s[2] + r] =
                w.at(((static_cast<std::size_t>(o) * s[1] + i) * s[2] + r) * s[3] + c);
          }
    return Tensor::from({s[0], s[1], s[3], s[2]}, std::move(data));
  };
  const auto flat_ext = net.spec().vertical.stack().extents().back();
  auto permute_head = [&](const Tensor& w, int maps) {
    const int h = flat_ext.rows, wd = flat_ext.cols;
    const int units = w.shape()[0];
    std::vector<real> data(w.size());
    for (int u = 0; u < units; ++u)
      for (int m = 0; m < maps; ++m)
        for (int r = 0; r < h; ++r)
          for (int c = 0; c < wd; ++c) {
            data[(static_cast<std::size_t>(u) * maps + m) * h * wd + static_cast<std::size_t>(c) * h + r] =
                w.at((static_cast<std::size_t>(u) * maps + m) * h * wd + static_cast<std::size_t>(r) * wd + c);
          }
    return Tensor::from({units, static_cast<int>(w.size()) / units}, std::move(data));
  };
  for (const auto& e : params.entries) {
    std::string name = e.name;
    Tensor t = e.tensor;
    if (name.rfind("v.", 0) == 0) {
      name = "h." + name.substr(2);
    } else if (name.rfind("h.", 0) == 0) {
      name = "v." + name.substr(2);
    }
    if (name.find(".weight") != std::string::npos && name.find("conv") != std::string::npos) {
      t = transpose_kernels(t);
    }
    if (name.find("head.weight") != std::string::npos) t = permute_head(t, 64);
    if (name == "classifier.weight") {
      const int n = t.shape()[1];
      std::vector<real> data(t.size());
      for (int i = 0; i < n / 2; ++i) {
        data[static_cast<std::size_t>(i)] = t.at(static_cast<std::size_t>(n / 2 + i));
        data[static_cast<std::size_t>(n / 2 + i)] = t.at(static_cast<std::size_t>(i));
      }
      t = Tensor::from({1, n}, std::move(data));
    }
    mirrored.entries.push_back({name, t});
  }
  // Restore the canonical entry order expected by the forward pass.
  Params ordered;
  Rng probe(0);
  for (const auto& want : net.init_params(probe).entries) {
    ordered.entries.push_back({want.name, mirrored.at(want.name)});
  }

  const Image img = noise_image(140, 140, 9);
  Image transposed = Image::filled(img.height, img.width);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) transposed.at(c, r) = img.at(r, c);

  Rng fwd(0);
  const int row = 66, col = 71;
  const real p1 =
      net.forward(params, net.extract_patch(img, row, col), RunMode::eval, fwd).probability();
  const real p2 = net.forward(ordered, net.extract_patch(transposed, col, row), RunMode::eval, fwd)
                      .probability();
  CHECK(p1 == doctest::Approx(p2).epsilon(1e-9));
}

TEST_CASE("square baseline truncates trailing layers that do not fit") {
  const NetworkSpec base = NetworkSpec::kidney_cardiac();
  const NetworkSpec s28 = NetworkSpec::square_baseline(28, base);
  const NetworkSpec s56 = NetworkSpec::square_baseline(56, base);
  const NetworkSpec s100 = NetworkSpec::square_baseline(100, base);
  CHECK(s28.vertical.conv_count() == 4);
  CHECK(s56.vertical.conv_count() == 7);
  CHECK(s100.vertical.conv_count() == 7);
  for (const auto& l : s56.vertical.layers) {
    if (l.kind == LayerKind::conv) {
      CHECK(l.kh == 3);
      CHECK(l.kw == 3);
    }
  }
  const Network net{s28};
  Rng rng(1);
  const Params params = net.init_params(rng);
  const Image img = noise_image(64, 64, 10);
  Rng fwd(0);
  const real p = net.forward(params, net.extract_patch(img, 30, 30), RunMode::eval, fwd).probability();
  CHECK(p > 0);
  CHECK(p < 1);
}

TEST_CASE("single-branch architectures run without slices") {
  NetworkSpec spec = NetworkSpec::kidney_cardiac().with_arch(Arch::vertical_only);
  const Network net{spec};
  Rng rng(2);
  const Params params = net.init_params(rng);
  CHECK_FALSE(params.has("h.conv1.weight"));
  CHECK(params.at("classifier.weight").shape() == std::vector<int>{1, 500});
  const Image img = noise_image(128, 128, 11);
  Rng fwd(0);
  const ForwardResult out = net.forward(params, net.extract_patch(img, 64, 64), RunMode::eval, fwd);
  CHECK_FALSE(out.slices.captured());
}

TEST_CASE("parameter container round trip") {
  const Network net{NetworkSpec::kidney_cardiac()};
  Rng rng(13);
  const Params params = net.init_params(rng);
  const auto path = std::filesystem::temp_directory_path() / "crossnet_params_test.bin";
  save_params(params, path.string());
  const Params back = load_params(path.string());
  net.check_params(back);
  REQUIRE(back.entries.size() == params.entries.size());
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    CHECK(back.entries[i].name == params.entries[i].name);
    CHECK(back.entries[i].tensor.shape() == params.entries[i].tensor.shape());
    CHECK(std::equal(back.entries[i].tensor.data().begin(), back.entries[i].tensor.data().end(),
                     params.entries[i].tensor.data().begin()));
  }
  // A truncated container is rejected.
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  CHECK_THROWS_WITH_AS(load_params(path.string()), doctest::Contains("truncated"),
                       std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("check_params rejects a container for a different architecture") {
  const Network dual{NetworkSpec::kidney_cardiac()};
  const Network single{NetworkSpec::kidney_cardiac().with_arch(Arch::vertical_only)};
  Rng rng(1);
  const Params params = single.init_params(rng);
  CHECK_THROWS_AS(dual.check_params(params), std::invalid_argument);
}
