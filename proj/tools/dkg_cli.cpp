#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dkg/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRunFailure = 3;

dkg::ExperimentConfig load(const std::string& path) {
  dkg::ExperimentConfig config = dkg::parse_config(path);
  dkg::apply_environment(config);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Batch Bayesian optimization with derivative observations"};
  app.require_subcommand(1);
  std::string config_path;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "Run all replications of an experiment");
  run->add_option("config", config_path, "JSON experiment config")->required();
  run->add_option("--jobs,-j", jobs, "Replications run in parallel")->check(CLI::PositiveNumber);
  auto* fig1 = app.add_subcommand("fig1", "Write the one-dimensional illustration tables");
  fig1->add_option("config", config_path, "JSON experiment config")->required();
  auto* list = app.add_subcommand("list-benchmarks", "List the benchmark functions");
  auto* validate = app.add_subcommand("validate", "Parse a config and print it with defaults filled in");
  validate->add_option("config", config_path, "JSON experiment config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*list) {
      for (const auto& name : dkg::benchmark_names()) {
        const auto& b = dkg::find_benchmark(name);
        std::cout << name << "\td=" << b.dim() << "\tq=" << b.default_q << "\tmin=" << b.min_value << '\n';
      }
      return 0;
    }
    const dkg::ExperimentConfig config = load(config_path);
    if (*validate) {
      std::cout << dkg::serialize(config);
      return 0;
    }
    if (*fig1) {
      dkg::emit_figure1(config);
      std::cout << "wrote figure1_curves.csv and figure1_summary.json to " << config.output_dir << '\n';
      return 0;
    }
    const dkg::ExperimentResult result = dkg::run_experiment(config, jobs);
    for (const auto& r : result.replications) {
      if (!r.complete) std::cerr << "replication " << r.index << " failed: " << r.failure << '\n';
    }
    std::cout << result.completed() << "/" << config.replications << " replications complete; aggregate in "
              << result.aggregate_file.string() << '\n';
    return result.completed() == config.replications ? 0 : kRunFailure;
  } catch (const dkg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "run failure: " << e.what() << '\n';
    return kRunFailure;
  }
}
