#include "crossnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace crossnet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + value + "' is not an integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + value + "' is not an unsigned integer");
  }
}

real parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("");
    return static_cast<real>(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + value + "' is not a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': '" + value + "' is not a boolean (true/false)");
}

std::vector<std::uint64_t> parse_u64_list(const std::string& key, const std::string& value) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(value);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(parse_u64(key, tok));
  }
  if (out.empty()) throw ConfigError("key '" + key + "': empty list");
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& key_table() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"data",
       {
           {"kind",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v != "synthetic" && v != "manifest")
                throw ConfigError("key '" + k + "': expected synthetic or manifest");
              c.data.kind = v;
            }},
           {"dir", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.data.dir = v; }},
           {"manifest",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.data.manifest = v; }},
           {"count",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.count = parse_int(k, v); }},
           {"train_count",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.train_count = parse_int(k, v); }},
           {"test_count",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.test_count = parse_int(k, v); }},
           {"width",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.width = parse_int(k, v); }},
           {"height",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.height = parse_int(k, v); }},
           {"blobs_min",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.blobs_min = parse_int(k, v); }},
           {"blobs_max",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.blobs_max = parse_int(k, v); }},
           {"radius_min",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.radius_min = parse_real(k, v); }},
           {"radius_max",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.radius_max = parse_real(k, v); }},
           {"blur_sigma",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.blur_sigma = parse_real(k, v); }},
           {"contrast_min",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.contrast_min = parse_real(k, v); }},
           {"contrast_max",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.contrast_max = parse_real(k, v); }},
           {"noise_sigma",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.noise_sigma = parse_real(k, v); }},
           {"seed",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.seed = parse_u64(k, v); }},
           {"texture_amp",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.texture_amp = parse_real(k, v); }},
           {"bars_per_axis",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.bars_per_axis = parse_int(k, v); }},
           {"bar_width_min",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.bar_width_min = parse_real(k, v); }},
           {"bar_width_max",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.data.synth.bar_width_max = parse_real(k, v); }},
       }},
      {"patch",
       {
           {"long",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.patch.long_extent = parse_int(k, v); }},
           {"short",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.patch.short_extent = parse_int(k, v); }},
       }},
      {"network",
       {
           {"preset",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              if (v != "kidney_cardiac" && v != "breast" && v != "custom")
                throw ConfigError("key '" + k + "': expected kidney_cardiac, breast or custom");
              c.network.preset = v;
            }},
           {"layers",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.network.layers = v; }},
           {"crossover_conv",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.network.crossover_conv = parse_int(k, v); }},
           {"head_units",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.network.head_units = parse_int(k, v); }},
           {"dropout",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.network.dropout = parse_real(k, v); }},
       }},
      {"sampler",
       {
           {"boundary_band",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.sampler.boundary_band = parse_int(k, v); }},
           {"interior_stride",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.sampler.interior_stride = parse_int(k, v); }},
           {"max_stride",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.sampler.max_stride = parse_int(k, v); }},
       }},
      {"train",
       {
           {"learning_rate",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.learning_rate = parse_real(k, v); }},
           {"epochs",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.epochs = parse_int(k, v); }},
           {"batch_size",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = parse_int(k, v); }},
           {"seed",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.seed = parse_u64(k, v); }},
           {"shuffle",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.shuffle = parse_bool(k, v); }},
           {"background_cap",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.train.background_cap = parse_real(k, v); }},
       }},
      {"loss",
       {
           {"kind",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              loss_kind_from_string(v);  // validates
              c.loss.kind = v;
            }},
           {"lambda",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.loss.lambda = parse_real(k, v); }},
           {"epsilon",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.loss.epsilon = parse_real(k, v); }},
       }},
      {"inference",
       {
           {"stride",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.inference.stride = parse_int(k, v); }},
           {"threshold",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.inference.threshold = parse_real(k, v); }},
           {"roi",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.inference.roi = v; }},
           {"raw_dump",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.inference.raw_dump = parse_bool(k, v); }},
       }},
      {"ablate",
       {
           {"variants",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.ablate.variants = v; }},
           {"seeds",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.ablate.seeds = parse_u64_list(k, v); }},
           {"jobs",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.ablate.jobs = parse_int(k, v); }},
           {"epochs",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.ablate.epochs = parse_int(k, v); }},
       }},
      {"output",
       {
           {"dir",
            [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }},
       }},
  };
  return table;
}

void apply_key(ExperimentConfig& config, const std::string& section, const std::string& key,
               const std::string& value) {
  const auto& table = key_table();
  const auto sec = table.find(section);
  if (sec == table.end()) throw ConfigError("unknown section [" + section + "]");
  const auto entry = sec->second.find(key);
  if (entry == sec->second.end()) {
    throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
  }
  entry->second(config, section + "." + key, value);
}

void validate(const ExperimentConfig& c) {
  if (c.data.train_count < 0 || c.data.test_count < 0 ||
      c.data.train_count + c.data.test_count > c.data.count) {
    throw ConfigError("data.train_count + data.test_count exceeds data.count");
  }
  if (c.data.kind == "manifest" && c.data.manifest.empty()) {
    throw ConfigError("data.kind=manifest requires data.manifest");
  }
  if (c.patch.long_extent <= c.patch.short_extent || c.patch.short_extent < 1) {
    throw ConfigError("patch requires long > short >= 1");
  }
  if (c.network.preset == "custom" && c.network.layers.empty()) {
    throw ConfigError("network.preset=custom requires network.layers");
  }
  if (c.network.dropout < 0 || c.network.dropout >= 1) {
    throw ConfigError("network.dropout must satisfy 0 <= p < 1");
  }
  if (c.loss.lambda < 0) throw ConfigError("loss.lambda must be >= 0");
  if (c.loss.epsilon <= 0) throw ConfigError("loss.epsilon must be > 0");
  if (c.train.learning_rate <= 0) throw ConfigError("train.learning_rate must be > 0");
  if (c.train.epochs < 1 || c.train.batch_size < 1) {
    throw ConfigError("train.epochs and train.batch_size must be positive");
  }
  if (c.inference.stride < 1) throw ConfigError("inference.stride must be >= 1");
  if (c.sampler.boundary_band < 1 || c.sampler.interior_stride < 1 || c.sampler.max_stride < 1) {
    throw ConfigError("sampler values must be >= 1");
  }
  if (c.ablate.jobs < 1) throw ConfigError("ablate.jobs must be >= 1");
}

}  // namespace

std::vector<BranchLayer> parse_layer_list(const std::string& text) {
  std::vector<BranchLayer> layers;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    if (tok == "pool") {
      layers.push_back(BranchLayer::pool());
      continue;
    }
    if (tok.rfind("conv", 0) == 0) {
      int kh = 0, kw = 0, maps = 0;
      char x1 = 0, x2 = 0;
      std::stringstream conv(tok.substr(4));
      conv >> kh >> x1 >> kw >> x2 >> maps;
      if (conv && conv.eof() && x1 == 'x' && x2 == 'x' && kh >= 1 && kw >= 1 && maps >= 1) {
        layers.push_back(BranchLayer::conv(kh, kw, maps));
        continue;
      }
    }
    throw ConfigError("bad layer token '" + tok + "' (expected convKHxKWxMAPS or pool)");
  }
  if (layers.empty()) throw ConfigError("network.layers is empty");
  return layers;
}

ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
  ExperimentConfig config;
  std::stringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (key_table().find(section) == key_table().end()) {
        throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any [section]");
    }
    apply_key(config, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  validate(config);
  return config;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

void ExperimentConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected section.key=value");
  const std::string path = trim(assignment.substr(0, eq));
  const auto dot = path.find('.');
  if (dot == std::string::npos) throw ConfigError("override '" + assignment + "': expected section.key=value");
  apply_key(*this, path.substr(0, dot), path.substr(dot + 1), trim(assignment.substr(eq + 1)));
  validate(*this);
}

NetworkSpec ExperimentConfig::network_spec() const {
  NetworkSpec spec;
  if (network.preset == "custom") {
    BranchSpec v;
    v.rows = patch.long_extent;
    v.cols = patch.short_extent;
    v.layers = parse_layer_list(network.layers);
    v.head_units = network.head_units;
    v.crossover_conv = network.crossover_conv > 0 ? network.crossover_conv : 1;
    spec = NetworkSpec::from_vertical(std::move(v), patch.long_extent, patch.short_extent);
  } else {
    spec = NetworkSpec::preset(network.preset);
    if (spec.patch_long != patch.long_extent || spec.patch_short != patch.short_extent) {
      throw ConfigError("preset " + network.preset + " uses a " + std::to_string(spec.patch_long) +
                        "x" + std::to_string(spec.patch_short) + " patch; [patch] says " +
                        std::to_string(patch.long_extent) + "x" + std::to_string(patch.short_extent));
    }
    if (network.crossover_conv > 0) spec = spec.with_crossover_conv(network.crossover_conv);
    spec.vertical.head_units = network.head_units;
    spec.horizontal.head_units = network.head_units;
  }
  spec.vertical.dropout_rate = network.dropout;
  spec.horizontal.dropout_rate = network.dropout;
  return spec;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig tc;
  tc.learning_rate = train.learning_rate;
  tc.epochs = train.epochs;
  tc.batch_size = train.batch_size;
  tc.seed = train.seed;
  tc.shuffle = train.shuffle;
  tc.background_cap_ratio = train.background_cap;
  tc.loss = loss_config();
  return tc;
}

LossConfig ExperimentConfig::loss_config() const {
  LossConfig lc;
  lc.kind = loss_kind_from_string(loss.kind);
  lc.lambda_cs = loss.lambda;
  lc.epsilon = loss.epsilon;
  return lc;
}

}  // namespace crossnet
