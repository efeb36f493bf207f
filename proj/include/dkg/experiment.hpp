#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dkg/bench.hpp"
#include "dkg/driver.hpp"

namespace dkg {

/// A configuration problem, tagged with the offending key path
/// (e.g. "budget.restarts").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key_path, const std::string& message)
      : std::runtime_error(key_path.empty() ? message : key_path + ": " + message), key_path_(std::move(key_path)) {}
  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

/// Optional overrides of the Monte-Carlo, SGA and sampler budgets.
struct BudgetOverrides {
  std::optional<int> hyper_samples;
  std::optional<int> walkers;
  std::optional<int> burn_in;
  std::optional<int> thin;
  std::optional<int> restarts;
  std::optional<int> sga_steps;
  std::optional<int> inner_starts;
  std::optional<int> inner_steps;
  std::optional<int> rerank_fantasies;
  std::optional<int> ei_fantasies;
  std::optional<int> initial_design;

  bool operator==(const BudgetOverrides&) const = default;
};

struct Figure1Config {
  int grid_size = 101;
  int history_size = 4;
  int fantasies = 256;
  double length_scale = 0.1;

  bool operator==(const Figure1Config&) const = default;
};

struct ExperimentConfig {
  std::string benchmark;
  AcquisitionKind acquisition = AcquisitionKind::kDkg;
  FantasyMode mode = FantasyMode::kDirectional;
  Index q = 1;
  int iterations = 10;
  int replications = 1;
  double noise_sigma = 0.5;
  /// Observable partial indices; the benchmark default when absent.
  std::optional<std::vector<int>> mask;
  BudgetOverrides budget;
  std::uint64_t seed = 0;
  std::string output_dir = "results";
  /// Record wall-clock time per iteration ("wall") or write zeros ("none").
  bool record_timing = true;
  Figure1Config figure1;

  bool operator==(const ExperimentConfig&) const = default;
};

AcquisitionKind parse_acquisition(const std::string& name);
FantasyMode parse_mode(const std::string& name);

/// Parses and validates JSON text; unknown keys and invalid combinations
/// raise ConfigError.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);
std::string serialize(const ExperimentConfig& config);

/// The observable-partials mask of a config (length d).
std::vector<bool> effective_mask(const ExperimentConfig& config);
ProblemSpec make_problem(const ExperimentConfig& config);
Objective benchmark_objective(const BenchmarkDef& bench, double sigma);

/// Replaces output_dir with DKG_OUTPUT_DIR when that variable is set.
void apply_environment(ExperimentConfig& config);

struct ReplicationOutcome {
  int index = 0;
  std::uint64_t seed = 0;
  bool complete = false;
  std::string failure;
  std::filesystem::path trace_file;
  RunTrace trace;
};

struct ExperimentResult {
  std::vector<ReplicationOutcome> replications;
  std::filesystem::path aggregate_file;
  std::filesystem::path metadata_file;
  int completed() const;
};

/// Per-iteration statistics of log10 regret over complete replications.
struct AggregateRow {
  int iteration = 0;
  Index eval_count = 0;
  double mean = 0.0;
  double std_dev = 0.0;
  double median = 0.0;
  int count = 0;
};

std::vector<AggregateRow> aggregate(const std::vector<ReplicationOutcome>& replications, const BenchmarkDef& bench);

/// R seeded runs (up to jobs in parallel), one trace CSV each, an aggregate
/// CSV and a JSON metadata file.
ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1);

std::string trace_csv(const RunTrace& trace, const BenchmarkDef& bench, bool record_timing);

/// Writes figure1_curves.csv and figure1_summary.json; returns the data.
Figure1Data emit_figure1(const ExperimentConfig& config);

}  // namespace dkg
