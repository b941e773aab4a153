#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "crossnet/experiments.hpp"
#include "crossnet/infer.hpp"
#include "crossnet/loss.hpp"
#include "crossnet/metrics.hpp"
#include "crossnet/network.hpp"
#include "crossnet/patch.hpp"
#include "crossnet/receptive.hpp"
#include "crossnet/train.hpp"

namespace py = pybind11;
using namespace crossnet;

namespace {

LayerStack make_stack(const std::vector<py::tuple>& layers, int rows, int cols) {
  LayerStack s;
  s.rows = rows;
  s.cols = cols;
  for (const auto& t : layers) {
    const auto kind = t[0].cast<std::string>();
    if (kind == "pool") {
      s.layers.push_back(LayerDesc::pool());
    } else if (kind == "conv") {
      s.layers.push_back(LayerDesc::conv(t[1].cast<int>(), t[2].cast<int>()));
    } else {
      throw std::invalid_argument("layer kind must be 'conv' or 'pool'");
    }
  }
  return s;
}

Image image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("image must be a 2-d array");
  Image img;
  img.height = static_cast<int>(arr.shape(0));
  img.width = static_cast<int>(arr.shape(1));
  img.pixels.assign(arr.data(), arr.data() + arr.size());
  return img;
}

Mask mask_from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& arr) {
  if (arr.ndim() != 2) throw std::invalid_argument("mask must be a 2-d array");
  Mask m;
  m.height = static_cast<int>(arr.shape(0));
  m.width = static_cast<int>(arr.shape(1));
  m.data.assign(arr.data(), arr.data() + arr.size());
  for (auto& v : m.data) v = v ? 1 : 0;
  return m;
}

py::array_t<double> array_from_image(const Image& img) {
  py::array_t<double> arr({img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), arr.mutable_data());
  return arr;
}

py::array_t<std::uint8_t> array_from_mask(const Mask& m) {
  py::array_t<std::uint8_t> arr({m.height, m.width});
  std::copy(m.data.begin(), m.data.end(), arr.mutable_data());
  return arr;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  if (t.rank() == 2) {
    py::array_t<double> arr({t.shape()[0], t.shape()[1]});
    std::copy(t.data().begin(), t.data().end(), arr.mutable_data());
    return arr;
  }
  py::array_t<double> arr({t.shape()[0], t.shape()[1], t.shape()[2]});
  std::copy(t.data().begin(), t.data().end(), arr.mutable_data());
  return arr;
}

SyntheticSpec spec_from_kwargs(int width, int height, double radius_min, double radius_max,
                               double blur_sigma, double contrast_min, double contrast_max,
                               double noise_sigma, std::uint64_t seed, int bars_per_axis) {
  SyntheticSpec spec;
  spec.width = width;
  spec.height = height;
  spec.radius_min = static_cast<real>(radius_min);
  spec.radius_max = static_cast<real>(radius_max);
  spec.blur_sigma = static_cast<real>(blur_sigma);
  spec.contrast_min = static_cast<real>(contrast_min);
  spec.contrast_max = static_cast<real>(contrast_max);
  spec.noise_sigma = static_cast<real>(noise_sigma);
  spec.seed = seed;
  spec.bars_per_axis = bars_per_axis;
  return spec;
}

/// Network plus (optionally) trained parameters, the unit the CLI moves
/// between commands.
class Model {
 public:
  explicit Model(const std::string& preset, const std::string& arch, int crossover_conv,
                 double dropout, int head_units) {
    NetworkSpec spec = NetworkSpec::preset(preset);
    if (crossover_conv > 0) spec = spec.with_crossover_conv(crossover_conv);
    spec.vertical.head_units = head_units;
    spec.horizontal.head_units = head_units;
    spec.vertical.dropout_rate = static_cast<real>(dropout);
    spec.horizontal.dropout_rate = static_cast<real>(dropout);
    if (arch == "dual") {
      spec.arch = Arch::dual;
    } else if (arch == "vertical_only") {
      spec.arch = Arch::vertical_only;
    } else if (arch == "horizontal_only") {
      spec.arch = Arch::horizontal_only;
    } else {
      throw std::invalid_argument("arch must be dual, vertical_only or horizontal_only");
    }
    net_ = std::make_unique<Network>(spec);
  }

  std::vector<std::vector<int>> slice_shapes() const {
    const auto& v = net_->vertical_slices();
    const auto& h = net_->horizontal_slices();
    const int maps = crossover_maps();
    const Extent vc = v.center_extent(), ve = v.ends_extent();
    const Extent hc = h.center_extent(), he = h.ends_extent();
    return {{maps, vc.rows, vc.cols},
            {maps, ve.rows, ve.cols},
            {maps, hc.rows, hc.cols},
            {maps, he.rows, he.cols}};
  }

  void init(std::uint64_t seed) {
    Rng rng = Rng(seed).fork(1);
    params_ = net_->init_params(rng);
    trained_ = true;
  }

  py::array_t<double> train_model(const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& images,
                                  const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& masks,
                                  int epochs, double learning_rate, int batch_size,
                                  std::uint64_t seed, const std::string& loss_kind,
                                  double lambda_cs, int boundary_band, int interior_stride,
                                  int max_stride, double background_cap) {
    if (images.size() != masks.size() || images.empty()) {
      throw std::invalid_argument("need matching, non-empty image and mask lists");
    }
    std::vector<LabeledImage> data;
    for (std::size_t i = 0; i < images.size(); ++i) {
      data.push_back({image_from_array(images[i]), mask_from_array(masks[i])});
    }
    SamplerConfig sampler{boundary_band, interior_stride, max_stride};
    std::vector<SampleSet> sets;
    for (const auto& li : data) sets.push_back(sample_training_centers(li.mask, sampler));

    TrainConfig tc;
    tc.learning_rate = static_cast<real>(learning_rate);
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.seed = seed;
    tc.loss.kind = loss_kind_from_string(loss_kind);
    tc.loss.lambda_cs = static_cast<real>(lambda_cs);
    tc.background_cap_ratio = static_cast<real>(background_cap);

    TrainResult result = crossnet::train(*net_, data, sets, nullptr, tc);
    params_ = std::move(result.params);
    trained_ = true;

    py::array_t<double> history({static_cast<py::ssize_t>(result.history.epochs.size()),
                                 static_cast<py::ssize_t>(3)});
    auto h = history.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < h.shape(0); ++i) {
      const auto& e = result.history.epochs[static_cast<std::size_t>(i)];
      h(i, 0) = e.mean_loss;
      h(i, 1) = e.mean_lpre;
      h(i, 2) = e.mean_lcs;
    }
    return history;
  }

  double forward_at(const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
                    int row, int col) const {
    require_params();
    const Image img = image_from_array(image);
    const CrossoverPatch patch = net_->extract_patch(img, row, col);
    Rng rng(0);
    return net_->forward(params_, patch, RunMode::eval, rng).probability();
  }

  py::tuple predict(const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
                    int stride, double threshold) const {
    require_params();
    const Image img = image_from_array(image);
    PredictConfig pc;
    pc.stride = stride;
    pc.threshold = static_cast<real>(threshold);
    const Prediction pred = predict_image(*net_, params_, img, nullptr, pc);
    Image prob;
    prob.width = pred.prob.width;
    prob.height = pred.prob.height;
    prob.pixels = pred.prob.prob;
    return py::make_tuple(array_from_mask(pred.mask), array_from_image(prob));
  }

  py::tuple extract(const py::array_t<double, py::array::c_style | py::array::forcecast>& image,
                    int row, int col) const {
    const Image img = image_from_array(image);
    const CrossoverPatch p = net_->extract_patch(img, row, col);
    return py::make_tuple(array_from_tensor(p.vertical), array_from_tensor(p.horizontal));
  }

  void save(const std::string& path) const {
    require_params();
    save_params(params_, path);
  }

  void load(const std::string& path) {
    Params p = load_params(path);
    net_->check_params(p);
    params_ = std::move(p);
    trained_ = true;
  }

  py::tuple patch_geometry() const {
    return py::make_tuple(net_->spec().patch_long, net_->spec().patch_short);
  }

 private:
  int crossover_maps() const {
    int conv_i = 0;
    for (const auto& l : net_->spec().vertical.layers) {
      if (l.kind != LayerKind::conv) continue;
      if (++conv_i == net_->spec().vertical.crossover_conv) return l.maps;
    }
    return 0;
  }

  void require_params() const {
    if (!trained_) throw std::runtime_error("model has no parameters; call init/train/load first");
  }

  std::unique_ptr<Network> net_;
  Params params_;
  bool trained_ = false;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual-branch CNN segmentation with cross-shaped patches";

  m.def(
      "receptive_rows",
      [](const std::vector<py::tuple>& layers, int rows, int cols, int layer,
         std::pair<int, int> range) {
        const RowRange r = receptive_rows(make_stack(layers, rows, cols), layer,
                                          {range.first, range.second});
        return std::make_pair(r.start, r.end);
      },
      py::arg("layers"), py::arg("rows"), py::arg("cols"), py::arg("layer"), py::arg("range"),
      "Exact input-row support of a feature-row range (1-based, inclusive)");

  m.def(
      "influence_oracle",
      [](const std::vector<py::tuple>& layers, int rows, int cols, int layer,
         std::pair<int, int> range) {
        const RowRange r = influence_oracle(make_stack(layers, rows, cols), layer,
                                            {range.first, range.second});
        return std::make_pair(r.start, r.end);
      },
      py::arg("layers"), py::arg("rows"), py::arg("cols"), py::arg("layer"), py::arg("range"));

  m.def(
      "invert_to_slice",
      [](const std::vector<py::tuple>& layers, int rows, int cols, int layer,
         std::pair<int, int> target) {
        const RowRange r = invert_to_slice(make_stack(layers, rows, cols), layer,
                                           {target.first, target.second});
        return std::make_pair(r.start, r.end);
      },
      py::arg("layers"), py::arg("rows"), py::arg("cols"), py::arg("layer"), py::arg("target"));

  m.def(
      "extract_crossover",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& image, int row,
         int col, int long_extent, int short_extent) {
        const CrossoverPatch p =
            extract_crossover(image_from_array(image), row, col, long_extent, short_extent);
        return py::make_tuple(array_from_tensor(p.vertical), array_from_tensor(p.horizontal));
      },
      py::arg("image"), py::arg("row"), py::arg("col"), py::arg("long_extent"),
      py::arg("short_extent"));

  m.def(
      "sample_centers",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& mask,
         int boundary_band, int interior_stride, int max_stride) {
        const SampleSet set = sample_training_centers(
            mask_from_array(mask), SamplerConfig{boundary_band, interior_stride, max_stride});
        py::list rows;
        for (const auto& s : set.samples) {
          rows.append(py::make_tuple(s.row, s.col, s.label, provenance_str(s)));
        }
        return py::make_tuple(rows, set.single_class_warning);
      },
      py::arg("mask"), py::arg("boundary_band") = 3, py::arg("interior_stride") = 2,
      py::arg("max_stride") = 8);

  m.def(
      "synth_generate",
      [](int count, std::uint64_t seed, int width, int height, double radius_min,
         double radius_max, double blur_sigma, double contrast_min, double contrast_max,
         double noise_sigma, int bars_per_axis) {
        const auto data = synth_generate(
            spec_from_kwargs(width, height, radius_min, radius_max, blur_sigma, contrast_min,
                             contrast_max, noise_sigma, seed, bars_per_axis),
            count);
        py::list out;
        for (const auto& li : data) {
          out.append(py::make_tuple(array_from_image(li.image), array_from_mask(li.mask)));
        }
        return out;
      },
      py::arg("count"), py::arg("seed") = 0, py::arg("width") = 128, py::arg("height") = 128,
      py::arg("radius_min") = 8.0, py::arg("radius_max") = 22.0, py::arg("blur_sigma") = 1.0,
      py::arg("contrast_min") = 0.25, py::arg("contrast_max") = 0.5, py::arg("noise_sigma") = 0.03,
      py::arg("bars_per_axis") = 2);

  m.def(
      "dsc",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& gt) {
        return dsc(mask_from_array(pred), mask_from_array(gt));
      },
      py::arg("pred"), py::arg("gt"));

  m.def(
      "hausdorff",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& gt)
          -> std::optional<double> {
        const auto hd = hausdorff(mask_from_array(pred), mask_from_array(gt));
        if (!hd) return std::nullopt;
        return static_cast<double>(*hd);
      },
      py::arg("pred"), py::arg("gt"));

  m.def(
      "over_under",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& gt) {
        return over_under(mask_from_array(pred), mask_from_array(gt));
      },
      py::arg("pred"), py::arg("gt"));

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&, const std::string&, int, double, int>(),
           py::arg("preset") = "kidney_cardiac", py::arg("arch") = "dual",
           py::arg("crossover_conv") = 0, py::arg("dropout") = 0.1, py::arg("head_units") = 500)
      .def("slice_shapes", &Model::slice_shapes)
      .def("patch_geometry", &Model::patch_geometry)
      .def("init", &Model::init, py::arg("seed") = 0)
      .def("train", &Model::train_model, py::arg("images"), py::arg("masks"), py::arg("epochs") = 3,
           py::arg("learning_rate") = 1e-4, py::arg("batch_size") = 16, py::arg("seed") = 1,
           py::arg("loss") = "full", py::arg("lambda_cs") = 1.0, py::arg("boundary_band") = 3,
           py::arg("interior_stride") = 2, py::arg("max_stride") = 8,
           py::arg("background_cap") = 0.0)
      .def("forward_at", &Model::forward_at, py::arg("image"), py::arg("row"), py::arg("col"))
      .def("predict", &Model::predict, py::arg("image"), py::arg("stride") = 3,
           py::arg("threshold") = 0.5)
      .def("extract", &Model::extract, py::arg("image"), py::arg("row"), py::arg("col"))
      .def("save", &Model::save, py::arg("path"))
      .def("load", &Model::load, py::arg("path"));
}
