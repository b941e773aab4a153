#include "crossnet/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "crossnet/infer.hpp"
#include "crossnet/metrics.hpp"

namespace crossnet {

void shuffle_indices(std::vector<int>& indices, Rng& rng) {
  for (std::size_t i = indices.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_below(i);
    std::swap(indices[i - 1], indices[j]);
  }
}

namespace {

struct Item {
  int image;
  int row, col;
  int label;
};

std::vector<Item> flatten_items(const std::vector<LabeledImage>& data,
                                const std::vector<SampleSet>& samples, real background_cap_ratio) {
  if (data.size() != samples.size()) {
    throw std::invalid_argument("train: one SampleSet per image required");
  }
  std::vector<Item> items;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (const auto& s : samples[i].samples) {
      items.push_back({static_cast<int>(i), s.row, s.col, s.label});
    }
  }
  std::size_t fg = 0, bg = 0;
  for (const auto& it : items) (it.label ? fg : bg)++;
  if (fg == 0 || bg == 0) {
    throw std::invalid_argument("train: training set must contain both classes (got " +
                                std::to_string(fg) + " foreground / " + std::to_string(bg) +
                                " background samples)");
  }
  if (background_cap_ratio > 0) {
    const std::size_t max_bg =
        static_cast<std::size_t>(std::ceil(background_cap_ratio * static_cast<real>(fg)));
    if (bg > max_bg) {
      // Even decimation of the background samples, order preserved.
      std::vector<Item> kept;
      kept.reserve(items.size() - bg + max_bg);
      std::size_t j = 0;
      for (const auto& it : items) {
        if (it.label) {
          kept.push_back(it);
        } else {
          ++j;
          if (j * max_bg / bg != (j - 1) * max_bg / bg) kept.push_back(it);
        }
      }
      items = std::move(kept);
    }
  }
  return items;
}

double mean_val_dsc(const Network& net, const Params& params,
                    const std::vector<LabeledImage>& valset) {
  PredictConfig pc;
  double acc = 0;
  for (const auto& li : valset) {
    const Prediction pred = predict_image(net, params, li.image, nullptr, pc);
    acc += dsc(pred.mask, li.mask);
  }
  return acc / static_cast<double>(valset.size());
}

}  // namespace

TrainResult train(const Network& net, const std::vector<LabeledImage>& data,
                  const std::vector<SampleSet>& samples, const std::vector<LabeledImage>* valset,
                  const TrainConfig& config) {
  if (config.learning_rate <= real(0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (config.epochs < 1 || config.batch_size < 1) {
    throw std::invalid_argument("train: epochs and batch_size must be positive");
  }
  const std::vector<Item> items = flatten_items(data, samples, config.background_cap_ratio);

  const Rng root(config.seed);
  Rng init_rng = root.fork(1);
  TrainResult result;
  result.params = net.init_params(init_rng);

  std::vector<int> order(items.size());
  std::iota(order.begin(), order.end(), 0);

  const bool wants_cs = (config.loss.kind == LossKind::full ||
                         config.loss.kind == LossKind::no_end_constraint) &&
                        config.loss.lambda_cs != real(0);
  if (wants_cs && !net.dual()) {
    throw std::invalid_argument("train: the constraint loss needs the dual-branch architecture");
  }

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) {
      Rng shuffle_rng = root.fork(0x100u + static_cast<std::uint64_t>(epoch));
      shuffle_indices(order, shuffle_rng);
    }
    const Rng epoch_rng = root.fork(0x10000u + static_cast<std::uint64_t>(epoch));

    double sum_loss = 0, sum_pred = 0, sum_cs = 0;
    std::size_t pos = 0;
    int batch_index = 0;
    while (pos < order.size()) {
      const std::size_t batch_n = std::min<std::size_t>(config.batch_size, order.size() - pos);
      const real inv_n = real(1) / static_cast<real>(batch_n);
      for (std::size_t b = 0; b < batch_n; ++b, ++pos) {
        const Item& item = items[static_cast<std::size_t>(order[pos])];
        CrossoverPatch patch =
            net.extract_patch(data[static_cast<std::size_t>(item.image)].image, item.row, item.col);
        patch.label = item.label;
        Rng sample_rng = epoch_rng.fork(pos);
        const ForwardResult fwd = net.forward(result.params, patch, RunMode::train, sample_rng);
        const SampleLoss loss = sample_loss(fwd.prob, item.label, fwd.slices, config.loss);
        if (!std::isfinite(loss.total.value())) {
          char msg[128];
          std::snprintf(msg, sizeof(msg), "non-finite training loss at epoch %d, batch %d", epoch,
                        batch_index);
          throw std::runtime_error(msg);
        }
        sum_loss += loss.total.value();
        sum_pred += loss.pred_value;
        sum_cs += loss.cs_value;
        backward(loss.total, inv_n);
      }
      for (auto& entry : result.params.entries) {
        auto dst = entry.tensor.mutable_data();
        const auto grad = entry.tensor.grad();
        if (grad.empty()) continue;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= config.learning_rate * grad[i];
      }
      result.params.zero_grad();
      ++batch_index;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = sum_loss / static_cast<double>(items.size());
    rec.mean_lpre = sum_pred / static_cast<double>(items.size());
    rec.mean_lcs = sum_cs / static_cast<double>(items.size());
    if (valset && !valset->empty()) rec.val_dsc = mean_val_dsc(net, result.params, *valset);
    result.history.epochs.push_back(rec);
  }
  return result;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "epoch,loss,l_pre,l_cs,val_dsc\n";
  char buf[160];
  for (const auto& e : history.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,", e.epoch, e.mean_loss, e.mean_lpre,
                  e.mean_lcs);
    out << buf;
    if (e.val_dsc) {
      std::snprintf(buf, sizeof(buf), "%.12g", *e.val_dsc);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

}  // namespace crossnet
