#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dkg/acquisition.hpp"
#include "dkg/hyper.hpp"

namespace dkg {

enum class AcquisitionKind { kDkg, kKg, kEi, kDei, kUcbPe };

std::string to_string(AcquisitionKind kind);
std::string to_string(FantasyMode mode);

struct ProblemSpec {
  Box domain;
  Index q = 1;
  int iterations = 1;
  FantasyMode mode = FantasyMode::kDirectional;
  /// Observable partials (length d). Directional mode needs every partial.
  std::vector<bool> gradient_mask;
  AcquisitionKind acquisition = AcquisitionKind::kDkg;

  /// Raw points; when nonempty the domain is this finite set.
  std::vector<Vector> finite_domain;
  /// Negative selects 2(d+1).
  int initial_design = -1;

  int hyper_samples = 10;
  SamplerOptions sampler;
  /// Hyperparameters in model coordinates; skips sampling when set.
  std::optional<HyperParameters> fixed_hyper;
  /// Standardize values using the initial design (otherwise shift 0, scale 1).
  bool standardize = true;

  AcquisitionOptions acquisition_options;
  /// Fantasies for batch-EI estimation.
  Index ei_fantasies = 256;
  double ucb_delta = 0.1;

  bool record_timing = true;

  void validate() const;
  ObservationModel observation_model() const;
};

struct EvaluationRequest {
  Vector x;
  /// Raw-space unit direction in directional mode.
  std::optional<Vector> direction;
  std::vector<bool> mask;
  std::uint64_t seed = 0;
};

/// An evaluation either yields a record in raw coordinates or an error.
struct EvaluationResult {
  std::optional<ObservationRecord> record;
  std::string error;

  static EvaluationResult success(ObservationRecord r) { return {std::move(r), {}}; }
  static EvaluationResult failure(std::string message) { return {std::nullopt, std::move(message)}; }
};

using Objective = std::function<EvaluationResult(const EvaluationRequest&)>;

struct IterationRecord {
  int iteration = 0;
  Index eval_count = 0;
  std::vector<Vector> batch;
  std::optional<Vector> direction;
  std::vector<ObservationRecord> observations;
  Vector recommendation;
  std::optional<double> recommendation_value;
  double acquisition_value = 0.0;
  double wall_ms = 0.0;
  std::string hyper_digest;
  std::vector<std::string> evaluation_errors;
};

struct RunTrace {
  std::vector<ObservationRecord> initial_design;
  std::vector<IterationRecord> iterations;
  bool complete = false;
  std::string failure;
};

/// Affine map between the raw problem and the unit-cube model.
struct ModelScaling {
  Box domain;
  double shift = 0.0;
  double scale = 1.0;

  Vector to_model(const Vector& x) const { return domain.to_unit(x); }
  Vector to_raw(const Vector& u) const { return domain.from_unit(u); }
  /// Model-space record for a raw record.
  ObservationRecord to_model(const ObservationRecord& raw) const;
};

/// The propose/evaluate/update loop. The objective is called with raw
/// coordinates; the Gaussian process lives on the unit cube.
class BoDriver {
 public:
  BoDriver(ProblemSpec spec, Objective objective, std::uint64_t seed,
           std::function<double(const Vector&)> truth = {});

  /// Evaluates the initial design. Called by the first step() if needed.
  void initialize();
  /// One iteration; throws EvaluationFailure after a repeated failure.
  IterationRecord step();
  /// Argmin of the hyperparameter-averaged posterior mean, raw coordinates.
  Vector recommend() const;

  int iteration() const { return iteration_; }
  Index eval_count() const { return static_cast<Index>(iteration_) * spec_.q; }
  bool done() const { return iteration_ >= spec_.iterations; }
  const ProblemSpec& spec() const { return spec_; }
  const ModelScaling& scaling() const { return scaling_; }
  const std::vector<ObservationRecord>& raw_history() const { return raw_history_; }
  const std::vector<ObservationRecord>& model_history() const { return model_history_; }
  const std::vector<ObservationRecord>& initial_design() const { return initial_records_; }
  const std::vector<GpPosterior>& posteriors() const { return posteriors_; }
  const std::vector<HyperSample>& hyper_samples() const { return samples_; }

 private:
  void refresh_hyper(bool resample);
  std::vector<ObservationRecord> evaluate_batch(const std::vector<Vector>& model_points,
                                                const std::optional<Vector>& model_direction, int tag,
                                                std::vector<std::string>* errors);
  SearchSpace model_space() const;
  std::string hyper_digest() const;

  ProblemSpec spec_;
  Objective objective_;
  std::uint64_t seed_;
  std::function<double(const Vector&)> truth_;
  ModelScaling scaling_;
  bool initialized_ = false;
  int iteration_ = 0;
  std::vector<ObservationRecord> raw_history_;
  std::vector<ObservationRecord> model_history_;
  std::vector<ObservationRecord> initial_records_;
  std::vector<HyperSample> samples_;
  std::vector<GpPosterior> posteriors_;
  Matrix walkers_;
};

class EvaluationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs the initial design and every iteration. Failures yield an incomplete
/// trace instead of an exception.
RunTrace run(const ProblemSpec& spec, const Objective& objective, std::uint64_t seed,
             std::function<double(const Vector&)> truth = {});

/// Argmin of the average of the posterior means over a search space.
Vector minimize_average_mean(std::span<const GpPosterior> posteriors, const SearchSpace& space,
                             const InnerOptions& options, std::uint64_t seed);

}  // namespace dkg
