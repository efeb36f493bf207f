#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dkg/posterior.hpp"
#include "dkg/rng.hpp"

namespace dkg {

struct HyperSample {
  KernelSpec kernel;
  double prior_mean = 0.0;
  double log_posterior = 0.0;

  HyperParameters hyper() const { return {kernel, prior_mean}; }
};

/// Gaussian log marginal likelihood of every present channel. Returns
/// -infinity when the Gram matrix stays singular after jitter.
double log_marginal_likelihood(const HyperParameters& hyper, const std::vector<ObservationRecord>& history);

/// d LML / d log l_m for every length scale.
Vector lml_gradient_log_lengths(const HyperParameters& hyper, const std::vector<ObservationRecord>& history);

/// Log-normal priors on the positive hyperparameters (medians and log-space
/// standard deviations); the prior mean is flat.
struct HyperPrior {
  double signal_median = 1.0;
  double signal_log_sd = 1.0;
  /// Quarter of the (unit) domain width.
  double length_median = 0.25;
  double length_log_sd = 1.0;
  double noise_median = 0.1;
  double noise_log_sd = 1.5;
};

/// Sampling coordinates: [log alpha, log l_1..d, log sigma2_value,
/// log sigma2_gradient, mu]. The gradient noise is shared by all partials.
Index hyper_parameter_count(Index dim);
Vector encode_hyper(const HyperParameters& hyper);
HyperParameters decode_hyper(const Vector& params, Index dim);
double log_prior(const Vector& params, Index dim, const HyperPrior& prior);

/// Affine-invariant ensemble sampler with the stretch move, updating the
/// ensemble in two halves so each half moves against a frozen complement.
class EnsembleSampler {
 public:
  using LogDensity = std::function<double(const Vector&)>;

  struct Result {
    /// Ensemble snapshots after burn-in, one matrix (dim x walkers) each.
    std::vector<Matrix> snapshots;
    std::vector<Vector> snapshot_log_density;
    Matrix final_positions;
    Vector final_log_density;
    double acceptance_rate = 0.0;
  };

  explicit EnsembleSampler(LogDensity log_density, double stretch = 2.0);

  /// Runs burn_in steps, then snapshots*thin steps keeping every thin-th
  /// ensemble. initial is dim x walkers.
  Result run(const Matrix& initial, int burn_in, int snapshots, int thin, Rng& rng) const;

 private:
  LogDensity log_density_;
  double stretch_;
};

struct SamplerOptions {
  int samples = 10;
  /// 0 selects max(20, 2 * free parameters).
  int walkers = 0;
  int burn_in = 200;
  int thin = 10;
  HyperPrior prior;
};

/// Fully Bayesian hyperparameter samples for a history on the unit cube.
/// When warm_start is given (dim x walkers from a previous call), walkers
/// start there instead of around the prior medians.
struct HyperSamplingResult {
  std::vector<HyperSample> samples;
  Matrix final_walkers;
  double acceptance_rate = 0.0;
};

HyperSamplingResult sample_hyperparameters(const std::vector<ObservationRecord>& history, Index dim,
                                           const SamplerOptions& options, std::uint64_t seed,
                                           const Matrix* warm_start = nullptr);

}  // namespace dkg
