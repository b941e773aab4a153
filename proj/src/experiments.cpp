#include "crossnet/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <set>
#include <sstream>

#include "crossnet/receptive.hpp"
#include "crossnet/train.hpp"

namespace fs = std::filesystem;

namespace crossnet {

std::string format_real(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return buf;
}

namespace {

std::string pad_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory '" + dir.string() + "'");
}

struct ManifestRow {
  std::string image, mask, split;
};

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest '" + path + "'");
  std::vector<ManifestRow> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    ManifestRow row;
    std::getline(ss, row.image, ',');
    std::getline(ss, row.mask, ',');
    std::getline(ss, row.split, ',');
    if (header) {
      header = false;
      if (row.image == "image_path") continue;  // optional header row
    }
    if (row.image.empty() || row.mask.empty() || row.split.empty()) {
      throw std::runtime_error("manifest '" + path + "': malformed row '" + line + "'");
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

Dataset load_dataset(const ExperimentConfig& config) {
  Dataset out;
  if (config.data.kind == "synthetic") {
    auto all = synth_generate(config.data.synth, config.data.count);
    for (int i = 0; i < config.data.train_count; ++i) {
      out.train.push_back(std::move(all[static_cast<std::size_t>(i)]));
      out.train_ids.push_back(pad_id(static_cast<std::size_t>(i)));
    }
    for (int i = 0; i < config.data.test_count; ++i) {
      const std::size_t idx = static_cast<std::size_t>(config.data.train_count + i);
      out.test.push_back(std::move(all[idx]));
      out.test_ids.push_back(pad_id(idx));
    }
    return out;
  }
  const auto rows = read_manifest(config.data.manifest);
  const fs::path base = fs::path(config.data.manifest).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.split != "train" && row.split != "test") continue;
    LabeledImage li{load_image(resolve(row.image)), load_mask(resolve(row.mask))};
    if (li.image.width != li.mask.width || li.image.height != li.mask.height) {
      throw std::runtime_error("image/mask extent mismatch for manifest row " + std::to_string(i));
    }
    if (row.split == "train") {
      out.train.push_back(std::move(li));
      out.train_ids.push_back(pad_id(i));
    } else {
      out.test.push_back(std::move(li));
      out.test_ids.push_back(pad_id(i));
    }
  }
  if (out.train.empty() && out.test.empty()) {
    throw std::runtime_error("manifest '" + config.data.manifest + "' has no train or test rows");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared pieces

namespace {

std::vector<SampleSet> sample_all(const std::vector<LabeledImage>& images,
                                  const SamplerConfig& sampler) {
  std::vector<SampleSet> out;
  out.reserve(images.size());
  for (const auto& li : images) out.push_back(sample_training_centers(li.mask, sampler));
  return out;
}

Mask load_roi(const ExperimentConfig& config, const Image& image) {
  Mask roi = load_mask(config.inference.roi);
  if (roi.width != image.width || roi.height != image.height) {
    throw std::runtime_error("ROI mask extent does not match image extent");
  }
  return roi;
}

double mean_test_dsc(const Network& net, const Params& params, const Dataset& data,
                     const PredictConfig& pc) {
  double acc = 0;
  for (const auto& li : data.test) {
    const Prediction pred = predict_image(net, params, li.image, nullptr, pc);
    acc += dsc(pred.mask, li.mask);
  }
  return acc / static_cast<double>(data.test.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

namespace cmd {

void generate(const ExperimentConfig& config) {
  if (config.data.kind != "synthetic") {
    throw ConfigError("generate requires data.kind=synthetic");
  }
  const fs::path dir(config.data.dir);
  ensure_dir(dir / "images");
  ensure_dir(dir / "masks");
  const auto all = synth_generate(config.data.synth, config.data.count);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write manifest");
  manifest << "image_path,mask_path,split\n";
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::string id = pad_id(i);
    const std::string img_rel = "images/img_" + id + ".pgm";
    const std::string mask_rel = "masks/mask_" + id + ".pgm";
    save_image(all[i].image, (dir / img_rel).string());
    save_mask(all[i].mask, (dir / mask_rel).string());
    const char* split = i < static_cast<std::size_t>(config.data.train_count)            ? "train"
                        : i < static_cast<std::size_t>(config.data.train_count + config.data.test_count)
                            ? "test"
                            : "unused";
    manifest << img_rel << "," << mask_rel << "," << split << "\n";
  }
  std::cout << "wrote " << all.size() << " image/mask pairs under " << dir.string() << "\n";
}

void sample(const ExperimentConfig& config) {
  const Dataset data = load_dataset(config);
  const fs::path dir = fs::path(config.output_dir) / "samples";
  ensure_dir(dir);
  std::size_t total = 0;
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    const SampleSet set = sample_training_centers(data.train[i].mask, config.sampler);
    write_sample_csv(set, (dir / ("samples_" + data.train_ids[i] + ".csv")).string());
    total += set.samples.size();
  }
  std::cout << "sampled " << total << " centers over " << data.train.size() << " images\n";
}

void train(const ExperimentConfig& config) {
  const Dataset data = load_dataset(config);
  if (data.train.empty()) throw std::runtime_error("train: dataset has no training images");
  const Network net(config.network_spec());
  const auto samples = sample_all(data.train, config.sampler);
  const TrainResult result = crossnet::train(net, data.train, samples, nullptr, config.train_config());
  ensure_dir(config.output_dir);
  save_params(result.params, (fs::path(config.output_dir) / "params.bin").string());
  write_history_csv(result.history, (fs::path(config.output_dir) / "history.csv").string());
  std::cout << "trained " << config.train.epochs << " epochs; final loss "
            << format_real(result.history.epochs.back().mean_loss) << "\n";
}

void predict(const ExperimentConfig& config) {
  const Dataset data = load_dataset(config);
  if (data.test.empty()) throw std::runtime_error("predict: dataset has no test images");
  const Network net(config.network_spec());
  const Params params = load_params((fs::path(config.output_dir) / "params.bin").string());
  net.check_params(params);
  const fs::path dir = fs::path(config.output_dir) / "pred";
  ensure_dir(dir);
  PredictConfig pc;
  pc.stride = config.inference.stride;
  pc.threshold = config.inference.threshold;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const std::string& id = data.test_ids[i];
    Mask roi;
    const Mask* roi_ptr = nullptr;
    if (!config.inference.roi.empty()) {
      roi = load_roi(config, data.test[i].image);
      roi_ptr = &roi;
    }
    const Prediction pred = predict_image(net, params, data.test[i].image, roi_ptr, pc);
    save_mask(pred.mask, (dir / ("pred_mask_" + id + ".pgm")).string());
    save_probability_pgm(pred.prob, (dir / ("pred_prob_" + id + ".pgm")).string());
    if (config.inference.raw_dump) {
      save_probability_raw(pred.prob, (dir / ("pred_prob_" + id + ".f64")).string());
    }
  }
  std::cout << "predicted " << data.test.size() << " images\n";
}

void eval(const ExperimentConfig& config) {
  const Dataset data = load_dataset(config);
  if (data.test.empty()) throw std::runtime_error("eval: dataset has no test images");
  const fs::path dir = fs::path(config.output_dir) / "pred";
  std::ofstream out(fs::path(config.output_dir) / "metrics.csv");
  if (!out) throw std::runtime_error("cannot write metrics.csv");
  out << "image_id,dsc,hd,or,ur\n";
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const std::string& id = data.test_ids[i];
    const Mask pred = load_mask((dir / ("pred_mask_" + id + ".pgm")).string());
    const Mask& gt = data.test[i].mask;
    const real d = dsc(pred, gt);
    const auto hd = hausdorff(pred, gt);
    const auto [o, u] = over_under(pred, gt);
    out << id << "," << format_real(d) << "," << (hd ? format_real(*hd) : "") << ","
        << format_real(o) << "," << format_real(u) << "\n";
  }
  std::cout << "wrote metrics for " << data.test.size() << " images\n";
}

RfcheckReport rfcheck(const ExperimentConfig& config) {
  Rng rng(config.train.seed);
  RfcheckReport report;
  const int stacks = 120;
  for (int s = 0; s < stacks; ++s) {
    LayerStack stack;
    stack.rows = 8 + static_cast<int>(rng.uniform_below(57));
    stack.cols = 8 + static_cast<int>(rng.uniform_below(57));
    const int depth = 1 + static_cast<int>(rng.uniform_below(6));
    int rows = stack.rows, cols = stack.cols;
    for (int l = 0; l < depth; ++l) {
      const bool can_pool = rows >= 2 && cols >= 2;
      if (can_pool && rng.uniform() < real(0.3)) {
        stack.layers.push_back(LayerDesc::pool());
        rows /= 2;
        cols /= 2;
      } else {
        const int kh = 1 + static_cast<int>(rng.uniform_below(std::min(7, rows)));
        const int kw = 1 + static_cast<int>(rng.uniform_below(std::min(7, cols)));
        stack.layers.push_back(LayerDesc::conv(kh, kw));
        rows -= kh - 1;
        cols -= kw - 1;
      }
    }
    ++report.stacks;
    const auto ext = stack.extents();
    for (int check = 0; check < 5; ++check) {
      const int layer = static_cast<int>(rng.uniform_below(stack.layers.size() + 1));
      const int extent = ext[static_cast<std::size_t>(layer)].rows;
      const int start = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(extent)));
      const int end = start + static_cast<int>(rng.uniform_below(
                                  static_cast<std::uint64_t>(extent - start + 1)));
      const RowRange r{start, end};
      ++report.checks;
      if (!(receptive_rows(stack, layer, r) == influence_oracle(stack, layer, r))) {
        ++report.mismatches;
      }
    }
  }
  ensure_dir(config.output_dir);
  std::ofstream out(fs::path(config.output_dir) / "rfcheck.txt");
  out << "stacks: " << report.stacks << "\nchecks: " << report.checks
      << "\nmismatches: " << report.mismatches << "\n";
  std::cout << "stacks: " << report.stacks << ", checks: " << report.checks
            << ", mismatches: " << report.mismatches << "\n";
  return report;
}

GradcheckSummary gradcheck(const ExperimentConfig& config) {
  NetworkSpec spec = config.network_spec();
  spec.vertical.dropout_rate = 0;  // finite differences need a deterministic loss
  spec.horizontal.dropout_rate = 0;
  const Network net(spec);

  Rng rng(config.train.seed);
  Rng init_rng = rng.fork(1);
  Params params = net.init_params(init_rng);

  SyntheticSpec synth = config.data.synth;
  synth.seed = splitmix64(config.train.seed);
  const auto data = synth_generate(synth, 1);
  const Image& image = data.front().image;
  const Mask& mask = data.front().mask;

  // Interior centers only: zero-filled border patches put conv outputs
  // exactly on the relu kink, where finite differences are undefined.
  const int margin = spec.patch_long / 2 + 1;
  if (image.height <= 2 * margin || image.width <= 2 * margin) {
    throw std::runtime_error("gradcheck: synthetic image too small for interior patches");
  }
  const int batch = 2;
  std::vector<CrossoverPatch> patches;
  for (int i = 0; i < batch; ++i) {
    const int r = margin + static_cast<int>(rng.uniform_below(
                               static_cast<std::uint64_t>(image.height - 2 * margin)));
    const int c = margin + static_cast<int>(rng.uniform_below(
                               static_cast<std::uint64_t>(image.width - 2 * margin)));
    patches.push_back(net.extract_patch(image, r, c));
    patches.back().label = mask.at(r, c) ? 1 : 0;
  }

  const LossConfig loss = config.loss_config();
  auto make_loss = [&]() {
    Rng unused(0);
    std::vector<Tensor> probs;
    std::vector<int> labels;
    std::vector<FeatureSlices> slices;
    for (const auto& p : patches) {
      ForwardResult fwd = net.forward(params, p, RunMode::train, unused);
      probs.push_back(fwd.prob);
      labels.push_back(p.label);
      slices.push_back(fwd.slices);
    }
    return total_loss(probs, labels, slices, loss);
  };

  // The loss is piecewise smooth (relu kinks, pool argmax flips), so the FD
  // window must be narrow enough to miss the kinks; 1e-7 keeps the double
  // precision roundoff four orders below the tolerance.
  const real step = real(1e-7);
  const real tolerance = real(1e-4);

  std::vector<GradProbe> probes;
  for (auto& entry : params.entries) {
    const std::size_t n = entry.tensor.size();
    const std::size_t want = std::min<std::size_t>(20, n);
    std::set<std::size_t> picked;
    while (picked.size() < want) picked.insert(rng.uniform_below(n));
    for (std::size_t idx : picked) probes.push_back({entry.name, entry.tensor, idx});
  }
  const GradCheckResult result = finite_diff_check(make_loss, probes, step, tolerance);

  GradcheckSummary summary;
  summary.max_rel_err = result.max_rel_err;
  summary.tolerance = tolerance;
  summary.probes = static_cast<int>(probes.size());
  summary.pass = result.pass;

  ensure_dir(config.output_dir);
  std::ofstream out(fs::path(config.output_dir) / "gradcheck.txt");
  out << "probes: " << summary.probes << "\nmax_rel_err: " << format_real(summary.max_rel_err)
      << "\nworst: " << result.worst_name << "[" << result.worst_index << "]"
      << "\nmax_rel_err < " << format_real(tolerance) << ": " << (summary.pass ? "PASS" : "FAIL")
      << "\n";
  std::cout << "max_rel_err=" << format_real(summary.max_rel_err) << " over " << summary.probes
            << " probes: " << (summary.pass ? "PASS" : "FAIL") << "\n";
  return summary;
}

}  // namespace cmd

// ---------------------------------------------------------------------------
// Ablations

std::vector<Variant> ablation_variants(const ExperimentConfig& config) {
  std::set<std::string> groups;
  {
    std::stringstream ss(config.ablate.variants);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok.erase(0, tok.find_first_not_of(" \t"));
      tok.erase(tok.find_last_not_of(" \t") + 1);
      if (!tok.empty()) groups.insert(tok);
    }
  }
  auto wants = [&](const char* g) { return groups.count("all") || groups.count(g); };
  for (const auto& g : groups) {
    if (g != "all" && g != "squares" && g != "singles" && g != "losses" && g != "layer_sweep") {
      throw ConfigError("unknown ablation group '" + g + "'");
    }
  }

  std::vector<Variant> variants;
  if (wants("squares")) {
    for (int size : {28, 56, 100}) {
      variants.push_back({"square_" + std::to_string(size), Arch::square, LossKind::entropy_only, 0, size});
    }
  }
  if (wants("singles")) {
    variants.push_back({"vertical_only", Arch::vertical_only, LossKind::entropy_only, 0, 0});
    variants.push_back({"horizontal_only", Arch::horizontal_only, LossKind::entropy_only, 0, 0});
    variants.push_back({"v_h_average", Arch::dual, LossKind::entropy_only, 0, 0});  // combined, no training
  }
  if (wants("losses")) {
    variants.push_back({"crossover_mse", Arch::dual, LossKind::mse_only, 0, 0});
    variants.push_back({"crossover_entropy", Arch::dual, LossKind::entropy_only, 0, 0});
    variants.push_back({"crossover_full", Arch::dual, LossKind::full, 0, 0});
    variants.push_back({"crossover_no_end", Arch::dual, LossKind::no_end_constraint, 0, 0});
  }
  if (wants("layer_sweep")) {
    const NetworkSpec base = config.network_spec();
    const int middle = (base.vertical.conv_count() + 1) / 2;
    for (int l = 1; l <= middle; ++l) {
      variants.push_back({"layer_conv" + std::to_string(l), Arch::dual, LossKind::full, l, 0});
    }
  }
  return variants;
}

namespace {

struct TrainedVariant {
  Network net;
  Params params;
};

TrainedVariant train_variant(const ExperimentConfig& config, const Variant& variant,
                             const Dataset& data, const std::vector<SampleSet>& samples,
                             std::uint64_t seed) {
  NetworkSpec spec = variant.arch == Arch::square
                         ? NetworkSpec::square_baseline(variant.square_size, config.network_spec())
                         : config.network_spec().with_arch(variant.arch);
  if (variant.crossover_conv > 0) spec = spec.with_crossover_conv(variant.crossover_conv);
  Network net{spec};

  TrainConfig tc = config.train_config();
  tc.seed = seed;
  tc.loss.kind = variant.loss_kind;
  if (config.ablate.epochs > 0) tc.epochs = config.ablate.epochs;
  TrainResult result = crossnet::train(net, data.train, samples, nullptr, tc);
  return {std::move(net), std::move(result.params)};
}

double averaged_pair_dsc(const TrainedVariant& a, const TrainedVariant& b, const Dataset& data,
                         const PredictConfig& pc) {
  double acc = 0;
  for (const auto& li : data.test) {
    const Prediction pa = predict_image(a.net, a.params, li.image, nullptr, pc);
    const Prediction pb = predict_image(b.net, b.params, li.image, nullptr, pc);
    Mask mask = Mask::filled(li.image.width, li.image.height, false);
    for (int r = 0; r < li.image.height; ++r)
      for (int c = 0; c < li.image.width; ++c) {
        const real avg = (pa.prob.at(r, c) + pb.prob.at(r, c)) / 2;
        mask.set(r, c, avg >= pc.threshold);
      }
    acc += dsc(mask, li.mask);
  }
  return acc / static_cast<double>(data.test.size());
}

std::vector<AblationRow> run_seed(const ExperimentConfig& config, const Dataset& data,
                                  const std::vector<SampleSet>& samples,
                                  const std::vector<Variant>& variants, std::uint64_t seed) {
  PredictConfig pc;
  pc.stride = config.inference.stride;
  pc.threshold = config.inference.threshold;

  std::vector<AblationRow> rows;
  // The combined row reuses the single-branch models of the same seed.
  const TrainedVariant* vertical = nullptr;
  const TrainedVariant* horizontal = nullptr;
  std::vector<std::unique_ptr<TrainedVariant>> keep;
  for (const auto& variant : variants) {
    if (variant.name == "v_h_average") {
      if (!vertical || !horizontal) {
        throw std::runtime_error("v_h_average requires the singles group");
      }
      rows.push_back({variant.name, seed, averaged_pair_dsc(*vertical, *horizontal, data, pc)});
      continue;
    }
    auto trained = std::make_unique<TrainedVariant>(train_variant(config, variant, data, samples, seed));
    rows.push_back({variant.name, seed, mean_test_dsc(trained->net, trained->params, data, pc)});
    if (variant.name == "vertical_only") vertical = trained.get();
    if (variant.name == "horizontal_only") horizontal = trained.get();
    keep.push_back(std::move(trained));
  }
  return rows;
}

}  // namespace

double run_variant(const ExperimentConfig& config, const Variant& variant, const Dataset& data,
                   const std::vector<SampleSet>& samples, std::uint64_t seed) {
  PredictConfig pc;
  pc.stride = config.inference.stride;
  pc.threshold = config.inference.threshold;
  const TrainedVariant trained = train_variant(config, variant, data, samples, seed);
  return mean_test_dsc(trained.net, trained.params, data, pc);
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& config, const Dataset& data,
                                      const std::vector<SampleSet>& samples,
                                      const std::vector<Variant>& variants) {
  const auto& seeds = config.ablate.seeds;
  std::vector<std::vector<AblationRow>> per_seed(seeds.size());
  if (config.ablate.jobs <= 1 || seeds.size() <= 1) {
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      per_seed[i] = run_seed(config, data, samples, variants, seeds[i]);
    }
  } else {
    // Seeds are independent; rows are reassembled in fixed order below.
    std::vector<std::future<std::vector<AblationRow>>> futures;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      futures.push_back(std::async(std::launch::async, [&, i] {
        return run_seed(config, data, samples, variants, seeds[i]);
      }));
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) per_seed[i] = futures[i].get();
  }

  std::vector<AblationRow> rows;
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (std::size_t s = 0; s < seeds.size(); ++s) rows.push_back(per_seed[s][v]);
  return rows;
}

namespace cmd {

void ablate(const ExperimentConfig& config) {
  const Dataset data = load_dataset(config);
  if (data.train.empty() || data.test.empty()) {
    throw std::runtime_error("ablate: dataset needs train and test images");
  }
  const auto samples = sample_all(data.train, config.sampler);
  const auto variants = ablation_variants(config);
  const auto rows = run_ablation(config, data, samples, variants);

  ensure_dir(config.output_dir);
  {
    std::ofstream out(fs::path(config.output_dir) / "ablation.csv");
    if (!out) throw std::runtime_error("cannot write ablation.csv");
    out << "variant,seed,dsc\n";
    for (const auto& row : rows) {
      out << row.variant << "," << row.seed << "," << format_real(row.dsc) << "\n";
    }
  }
  {
    std::ofstream out(fs::path(config.output_dir) / "ablation_summary.csv");
    if (!out) throw std::runtime_error("cannot write ablation_summary.csv");
    out << "variant,mean_dsc,min_dsc,max_dsc\n";
    for (const auto& variant : variants) {
      double sum = 0, lo = 1, hi = 0;
      int n = 0;
      for (const auto& row : rows) {
        if (row.variant != variant.name) continue;
        sum += row.dsc;
        lo = std::min(lo, row.dsc);
        hi = std::max(hi, row.dsc);
        ++n;
      }
      out << variant.name << "," << format_real(sum / n) << "," << format_real(lo) << ","
          << format_real(hi) << "\n";
    }
  }
  std::cout << "ablation finished: " << rows.size() << " rows over " << variants.size()
            << " variants\n";
}

}  // namespace cmd

}  // namespace crossnet
