#include "dkg/hyper.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>

#include "dkg/linalg.hpp"

namespace dkg {

double log_marginal_likelihood(const HyperParameters& hyper, const std::vector<ObservationRecord>& history) {
  try {
    const GpPosterior p(hyper, history);
    const Index n = p.channel_count();
    if (n == 0) return 0.0;
    const double fit = p.centered_observations().dot(p.weights());
    return -0.5 * fit - 0.5 * cholesky_log_det(p.gram_cholesky()) -
           0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  } catch (const SingularModelError&) {
    return -std::numeric_limits<double>::infinity();
  }
}

Vector lml_gradient_log_lengths(const HyperParameters& hyper, const std::vector<ObservationRecord>& history) {
  const GpPosterior p(hyper, history);
  const Index n = p.channel_count();
  const Index d = p.dim();
  Vector grad = Vector::Zero(d);
  if (n == 0) return grad;
  const Matrix inv = cholesky_solve(p.gram_cholesky(), Matrix(Matrix::Identity(n, n)));
  const Matrix outer = p.weights() * p.weights().transpose() - inv;
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      const Vector dg = functional_covariance_dloglength(p.channel_points().col(a), p.channel_points().col(b),
                                                         p.channel_functionals_t().col(a),
                                                         p.channel_functionals_t().col(b), p.kernel());
      grad += 0.5 * outer(a, b) * dg;
    }
  }
  return grad;
}

Index hyper_parameter_count(Index dim) { return dim + 4; }

Vector encode_hyper(const HyperParameters& hyper) {
  const Index d = hyper.kernel.dim();
  Vector p(hyper_parameter_count(d));
  p[0] = std::log(hyper.kernel.signal_variance);
  p.segment(1, d) = hyper.kernel.length_scales.array().log();
  p[d + 1] = std::log(hyper.kernel.noise_variances[0]);
  p[d + 2] = std::log(d > 0 ? hyper.kernel.noise_variances[1] : hyper.kernel.noise_variances[0]);
  p[d + 3] = hyper.prior_mean;
  return p;
}

HyperParameters decode_hyper(const Vector& params, Index dim) {
  require(params.size() == hyper_parameter_count(dim), "decode_hyper: parameter vector has the wrong size");
  Vector noise(dim + 1);
  noise[0] = std::exp(params[dim + 1]);
  noise.tail(dim).setConstant(std::exp(params[dim + 2]));
  return {KernelSpec(std::exp(params[0]), params.segment(1, dim).array().exp(), noise), params[dim + 3]};
}

namespace {

double log_normal_in_log_space(double log_value, double median, double log_sd) {
  const double z = (log_value - std::log(median)) / log_sd;
  return -0.5 * z * z;
}

}  // namespace

double log_prior(const Vector& params, Index dim, const HyperPrior& prior) {
  double lp = log_normal_in_log_space(params[0], prior.signal_median, prior.signal_log_sd);
  for (Index i = 0; i < dim; ++i) lp += log_normal_in_log_space(params[1 + i], prior.length_median, prior.length_log_sd);
  lp += log_normal_in_log_space(params[dim + 1], prior.noise_median, prior.noise_log_sd);
  lp += log_normal_in_log_space(params[dim + 2], prior.noise_median, prior.noise_log_sd);
  return lp;
}

EnsembleSampler::EnsembleSampler(LogDensity log_density, double stretch)
    : log_density_(std::move(log_density)), stretch_(stretch) {
  require(stretch_ > 1.0, "EnsembleSampler: stretch parameter must exceed 1");
}

EnsembleSampler::Result EnsembleSampler::run(const Matrix& initial, int burn_in, int snapshots, int thin,
                                             Rng& rng) const {
  const Index dim = initial.rows();
  const Index walkers = initial.cols();
  require(walkers >= 4 && walkers % 2 == 0, "EnsembleSampler: need an even number of at least 4 walkers");
  require(burn_in >= 0 && snapshots >= 0 && thin >= 1, "EnsembleSampler: invalid schedule");

  Matrix pos = initial;
  Vector logp(walkers);
  bool any_finite = false;
  for (Index k = 0; k < walkers; ++k) {
    logp[k] = log_density_(pos.col(k));
    if (std::isnan(logp[k])) logp[k] = -std::numeric_limits<double>::infinity();
    any_finite = any_finite || std::isfinite(logp[k]);
  }
  if (!any_finite) throw std::runtime_error("EnsembleSampler: every walker starts at zero posterior density");

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index half = walkers / 2;
  long accepted = 0, proposed = 0;
  Result out;
  const int total = burn_in + snapshots * thin;
  for (int step = 1; step <= total; ++step) {
    for (int side = 0; side < 2; ++side) {
      const Index begin = side * half;
      const Index other = (1 - side) * half;
      for (Index k = begin; k < begin + half; ++k) {
        const double u = unit(rng);
        const double z = std::pow((stretch_ - 1.0) * u + 1.0, 2) / stretch_;
        const Index j = other + static_cast<Index>(unit(rng) * static_cast<double>(half)) % half;
        const Vector proposal = pos.col(j) + z * (pos.col(k) - pos.col(j));
        double lp = log_density_(proposal);
        if (std::isnan(lp)) lp = -std::numeric_limits<double>::infinity();
        const double log_ratio = static_cast<double>(dim - 1) * std::log(z) + lp - logp[k];
        ++proposed;
        if (std::isfinite(lp) && std::log(unit(rng)) < log_ratio) {
          pos.col(k) = proposal;
          logp[k] = lp;
          ++accepted;
        }
      }
    }
    if (step > burn_in && (step - burn_in) % thin == 0) {
      out.snapshots.push_back(pos);
      out.snapshot_log_density.push_back(logp);
    }
  }
  out.final_positions = pos;
  out.final_log_density = logp;
  out.acceptance_rate = proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  return out;
}

HyperSamplingResult sample_hyperparameters(const std::vector<ObservationRecord>& history, Index dim,
                                           const SamplerOptions& options, std::uint64_t seed,
                                           const Matrix* warm_start) {
  require(options.samples >= 1, "sample_hyperparameters: need at least one sample");
  const Index nfree = hyper_parameter_count(dim);
  Index walkers = options.walkers > 0 ? options.walkers : std::max<Index>(20, 2 * nfree);
  require(walkers >= 2 * nfree, "sample_hyperparameters: need at least twice as many walkers as parameters");
  if (walkers % 2 != 0) ++walkers;

  double mean_value = 0.0;
  int counted = 0;
  for (const auto& rec : history) {
    if (rec.value) {
      mean_value += *rec.value;
      ++counted;
    }
  }
  if (counted > 0) mean_value /= counted;

  const HyperPrior prior = options.prior;
  auto log_post = [&](const Vector& params) {
    for (Index i = 0; i < params.size(); ++i) {
      if (!std::isfinite(params[i])) return -std::numeric_limits<double>::infinity();
    }
    // Keep the search inside a numerically sane region.
    if ((params.head(dim + 3).array().abs() > 25.0).any()) return -std::numeric_limits<double>::infinity();
    const double lml = log_marginal_likelihood(decode_hyper(params, dim), history);
    return lml + log_prior(params, dim, prior);
  };

  Rng rng = make_rng(seed, Stream::kHyper);
  Matrix initial(nfree, walkers);
  if (warm_start != nullptr && warm_start->rows() == nfree && warm_start->cols() == walkers) {
    initial = *warm_start;
  } else {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector centre(nfree);
    centre[0] = std::log(prior.signal_median);
    centre.segment(1, dim).setConstant(std::log(prior.length_median));
    centre[dim + 1] = std::log(prior.noise_median);
    centre[dim + 2] = std::log(prior.noise_median);
    centre[dim + 3] = mean_value;
    for (Index k = 0; k < walkers; ++k) {
      for (Index i = 0; i < nfree; ++i) initial(i, k) = centre[i] + 0.1 * gauss(rng);
    }
  }

  const EnsembleSampler sampler(log_post);
  const int snapshots = std::max(options.samples, 1);
  const auto result = sampler.run(initial, options.burn_in, snapshots, options.thin, rng);
  if (result.acceptance_rate <= 0.1 || result.acceptance_rate >= 0.9) {
    std::cerr << "sample_hyperparameters: acceptance rate " << result.acceptance_rate
              << " outside (0.1, 0.9)\n";
  }

  HyperSamplingResult out;
  out.final_walkers = result.final_positions;
  out.acceptance_rate = result.acceptance_rate;

  // Pool the retained ensembles, then take evenly spaced members.
  std::vector<std::pair<Vector, double>> pool;
  for (std::size_t s = 0; s < result.snapshots.size(); ++s) {
    for (Index k = 0; k < walkers; ++k) {
      const double lp = result.snapshot_log_density[s][k];
      if (std::isfinite(lp)) pool.emplace_back(result.snapshots[s].col(k), lp);
    }
  }
  if (pool.empty()) throw std::runtime_error("sample_hyperparameters: no finite retained sample");

  auto make = [&](const std::pair<Vector, double>& entry) {
    const HyperParameters h = decode_hyper(entry.first, dim);
    return HyperSample{h.kernel, h.prior_mean, entry.second};
  };
  if (options.samples == 1) {
    const auto best = std::max_element(pool.begin(), pool.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    out.samples.push_back(make(*best));
    return out;
  }
  const double stride = static_cast<double>(pool.size()) / static_cast<double>(options.samples);
  for (int i = 0; i < options.samples; ++i) {
    const auto idx = static_cast<std::size_t>((static_cast<double>(i) + 0.5) * stride);
    out.samples.push_back(make(pool[std::min(idx, pool.size() - 1)]));
  }
  return out;
}

}  // namespace dkg
