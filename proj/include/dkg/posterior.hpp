#pragma once

#include <vector>

#include <Eigen/Dense>

#include "dkg/kernel.hpp"
#include "dkg/observation.hpp"

namespace dkg {

/// Kernel hyperparameters plus the constant prior mean of f.
struct HyperParameters {
  KernelSpec kernel;
  double prior_mean = 0.0;
};

/// Gaussian-process posterior over (f, grad f) conditioned on a history of
/// possibly incomplete observations. Immutable once built; safe to share
/// between threads for reading.
///
/// Each observed channel is a linear functional c_b of (f, grad f) at x_b.
/// The Gram matrix G[a, b] = c_a^T Ktilde(x_a, x_b) c_b + noise_a delta_ab is
/// assembled over present channels only, so missing partials simply never
/// appear as rows or columns.
class GpPosterior {
 public:
  GpPosterior(double prior_mean, KernelSpec kernel, std::vector<ObservationRecord> history);
  GpPosterior(const HyperParameters& hyper, std::vector<ObservationRecord> history)
      : GpPosterior(hyper.prior_mean, hyper.kernel, std::move(history)) {}

  Index dim() const { return kernel_.dim(); }
  const KernelSpec& kernel() const { return kernel_; }
  double prior_mean() const { return prior_mean_; }
  HyperParameters hyper() const { return {kernel_, prior_mean_}; }
  const std::vector<ObservationRecord>& history() const { return history_; }

  Index channel_count() const { return static_cast<Index>(channel_record_.size()); }
  const Matrix& channel_points() const { return points_; }            // d x n
  const Matrix& channel_functionals() const { return functionals_; }  // n x (d+1)
  /// Same functionals stored one per column, (d+1) x n.
  const Matrix& channel_functionals_t() const { return functionals_t_; }
  const Vector& centered_observations() const { return centered_; }
  Index channel_record(Index channel) const { return channel_record_[static_cast<std::size_t>(channel)]; }

  /// Lower Cholesky factor of the (jittered) Gram matrix.
  const Matrix& gram_cholesky() const { return chol_; }
  double jitter() const { return jitter_; }
  /// G^{-1} (y - prior mean of each channel).
  const Vector& weights() const { return weights_; }

  /// Prior mean of the functional c: mu * c_0.
  double prior_mean_of(const Vector& c) const { return prior_mean_ * c[0]; }

  /// Column b is Ktilde(x, x_b) c_b: prior covariance of every channel at x
  /// with training channel b. Shape (d+1) x n.
  Matrix cross_columns(const Vector& x) const;

  /// Prior covariance between the functional c at x and every training channel.
  Vector cross_covariance(const Vector& x, const Vector& c) const;

  /// Posterior mean of all d+1 channels at x.
  Vector mean(const Vector& x) const;
  double mean_value(const Vector& x) const;

  /// Posterior covariance of two functionals.
  double covariance(const Vector& x, const Vector& c, const Vector& xp, const Vector& cp) const;
  /// Posterior variance of f(x).
  double variance(const Vector& x) const;

  /// L^{-1} k for a prior cross-covariance vector k.
  Vector whiten(const Vector& k) const;
  Matrix whiten(const Matrix& k) const;
  /// G^{-1} k.
  Vector solve(const Vector& k) const;
  Matrix solve(const Matrix& k) const;

 private:
  double prior_mean_;
  KernelSpec kernel_;
  std::vector<ObservationRecord> history_;
  Matrix points_;
  Matrix functionals_;
  Matrix functionals_t_;
  Vector noise_;
  Vector centered_;
  std::vector<Index> channel_record_;
  Matrix chol_;
  double jitter_ = 0.0;
  Vector weights_;
};

/// Build a posterior; an empty history yields the prior.
GpPosterior build_posterior(double prior_mean, const KernelSpec& kernel,
                            std::vector<ObservationRecord> history);

/// Joint posterior over all channels at several points. Means are (d+1) x k
/// (one column per point); the covariance is the (d+1)k square matrix with
/// point-major blocks.
struct PosteriorQuery {
  Matrix means;
  Matrix covariance;
};

PosteriorQuery posterior_query(const GpPosterior& posterior, const std::vector<Vector>& xs);

/// Exact gradient of the posterior mean of f.
Vector mean_gradient(const GpPosterior& posterior, const Vector& x);

/// The bivariate process (f, theta^T grad f) obtained by projecting the joint
/// posterior with P = [[1, 0], [0, theta^T]]. Holds a reference to the
/// posterior, which must outlive it.
class BivariateProjection {
 public:
  BivariateProjection(const GpPosterior& posterior, Vector theta);

  const Vector& direction() const { return theta_; }
  Eigen::Vector2d mean(const Vector& x) const;
  Eigen::Matrix2d covariance(const Vector& x1, const Vector& x2) const;
  /// (sigma_0^2, sum_j theta_j^2 sigma_j^2).
  Eigen::Vector2d noise() const;

 private:
  const GpPosterior* posterior_;
  Vector theta_;
  Vector value_functional_;
  Vector directional_functional_;
};

BivariateProjection project_directional(const GpPosterior& posterior, const Vector& theta);

}  // namespace dkg
