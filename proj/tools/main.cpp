#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "crossnet/experiments.hpp"

namespace {

std::string one_line(std::string msg) {
  for (auto& c : msg)
    if (c == '\n' || c == '\r') c = ' ';
  return msg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crossnet: dual-branch segmentation with cross-shaped patches"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;

  const std::vector<std::string> commands = {"generate", "sample", "train",     "predict",
                                             "eval",     "rfcheck", "gradcheck", "ablate"};
  for (const auto& name : commands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config file (defaults apply when omitted)");
    sub->add_option("--set", overrides, "override, section.key=value (repeatable)");
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "training seed (overrides train.seed)")
        ->each([&](const std::string&) { seed_set = true; });
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    crossnet::ExperimentConfig config;
    try {
      if (!config_path.empty()) config = crossnet::ExperimentConfig::parse_file(config_path);
      for (const auto& o : overrides) config.apply_override(o);
      if (!out_dir.empty()) config.output_dir = out_dir;
      if (seed_set) config.train.seed = seed;
    } catch (const crossnet::ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw crossnet::ConfigError(e.what());
    }

    if (command == "generate") {
      crossnet::cmd::generate(config);
    } else if (command == "sample") {
      crossnet::cmd::sample(config);
    } else if (command == "train") {
      crossnet::cmd::train(config);
    } else if (command == "predict") {
      crossnet::cmd::predict(config);
    } else if (command == "eval") {
      crossnet::cmd::eval(config);
    } else if (command == "rfcheck") {
      if (crossnet::cmd::rfcheck(config).mismatches != 0) {
        throw std::runtime_error("receptive-field oracle mismatches found");
      }
    } else if (command == "gradcheck") {
      if (!crossnet::cmd::gradcheck(config).pass) {
        throw std::runtime_error("gradient check failed");
      }
    } else if (command == "ablate") {
      crossnet::cmd::ablate(config);
    }
  } catch (const crossnet::ConfigError& e) {
    std::cerr << "error: config: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << "\n";
    return 3;
  }
  return 0;
}
