#include "dkg/posterior.hpp"

#include <cmath>
#include <sstream>

#include "dkg/linalg.hpp"

namespace dkg {

GpPosterior::GpPosterior(double prior_mean, KernelSpec kernel, std::vector<ObservationRecord> history)
    : prior_mean_(prior_mean), kernel_(std::move(kernel)), history_(std::move(history)) {
  kernel_.validate();
  require(std::isfinite(prior_mean_), "GpPosterior: prior mean must be finite");
  const Index d = kernel_.dim();

  Index n = 0;
  for (std::size_t r = 0; r < history_.size(); ++r) {
    history_[r].validate(d);
    n += history_[r].channel_count();
  }
  points_.resize(d, n);
  functionals_.resize(n, d + 1);
  noise_.resize(n);
  centered_.resize(n);
  channel_record_.reserve(static_cast<std::size_t>(n));
  Index row = 0;
  for (std::size_t r = 0; r < history_.size(); ++r) {
    const ChannelSet set = channels_of(history_[r]);
    for (Index k = 0; k < set.functionals.rows(); ++k, ++row) {
      points_.col(row) = history_[r].location;
      functionals_.row(row) = set.functionals.row(k);
      const Vector c = set.functionals.row(k).transpose();
      noise_[row] = kernel_.channel_noise(c);
      centered_[row] = set.observed[k] - prior_mean_of(c);
      channel_record_.push_back(static_cast<Index>(r));
    }
  }

  functionals_t_ = functionals_.transpose();
  Matrix gram(n, n);
  Vector column(d + 1);
  for (Index b = 0; b < n; ++b) {
    for (Index a = b; a < n; ++a) {
      column.setZero();
      accumulate_kernel_column(points_.col(a), points_.col(b), functionals_t_.col(b), 1.0, kernel_, column);
      const double v = functionals_t_.col(a).dot(column);
      gram(a, b) = v;
      gram(b, a) = v;
    }
    gram(b, b) += noise_[b];
  }

  try {
    JitteredCholesky factor = jittered_cholesky(gram);
    chol_ = std::move(factor.lower);
    jitter_ = factor.jitter;
  } catch (const CholeskyFailure& failure) {
    const Index record = channel_record_[static_cast<std::size_t>(failure.row())];
    std::ostringstream msg;
    msg << "Gram matrix singular at observation record " << record << ": " << failure.what();
    throw SingularModelError(msg.str(), record);
  }
  weights_ = n > 0 ? cholesky_solve(chol_, centered_) : Vector();
}

Matrix GpPosterior::cross_columns(const Vector& x) const {
  require(x.size() == dim(), "GpPosterior: query dimension mismatch");
  const Index n = channel_count();
  Matrix out = Matrix::Zero(dim() + 1, n);
  Vector column(dim() + 1);
  for (Index b = 0; b < n; ++b) {
    column.setZero();
    accumulate_kernel_column(x, points_.col(b), functionals_t_.col(b), 1.0, kernel_, column);
    out.col(b) = column;
  }
  return out;
}

Vector GpPosterior::cross_covariance(const Vector& x, const Vector& c) const {
  require(c.size() == dim() + 1, "GpPosterior: functional dimension mismatch");
  return cross_columns(x).transpose() * c;
}

Vector GpPosterior::mean(const Vector& x) const {
  Vector m = Vector::Zero(dim() + 1);
  m[0] = prior_mean_;
  if (channel_count() == 0) {
    require(x.size() == dim(), "GpPosterior: query dimension mismatch");
    return m;
  }
  return m + cross_columns(x) * weights_;
}

double GpPosterior::mean_value(const Vector& x) const {
  require(x.size() == dim(), "GpPosterior: query dimension mismatch");
  double m = prior_mean_;
  Vector column = Vector::Zero(dim() + 1);
  for (Index b = 0; b < channel_count(); ++b) {
    accumulate_kernel_column(x, points_.col(b), functionals_t_.col(b), weights_[b], kernel_, column);
  }
  m += column[0];
  return m;
}

double GpPosterior::covariance(const Vector& x, const Vector& c, const Vector& xp,
                               const Vector& cp) const {
  const double prior = functional_covariance(x, xp, c, cp, kernel_);
  if (channel_count() == 0) return prior;
  return prior - whiten(cross_covariance(x, c)).dot(whiten(cross_covariance(xp, cp)));
}

double GpPosterior::variance(const Vector& x) const {
  const Vector e0 = unit_functional(dim(), 0);
  return covariance(x, e0, x, e0);
}

Vector GpPosterior::whiten(const Vector& k) const {
  return chol_.triangularView<Eigen::Lower>().solve(k);
}

Matrix GpPosterior::whiten(const Matrix& k) const {
  return chol_.triangularView<Eigen::Lower>().solve(k);
}

Vector GpPosterior::solve(const Vector& k) const {
  if (channel_count() == 0) return Vector();
  return cholesky_solve(chol_, k);
}

Matrix GpPosterior::solve(const Matrix& k) const {
  if (channel_count() == 0) return Matrix(0, k.cols());
  return cholesky_solve(chol_, k);
}

GpPosterior build_posterior(double prior_mean, const KernelSpec& kernel,
                            std::vector<ObservationRecord> history) {
  return GpPosterior(prior_mean, kernel, std::move(history));
}

PosteriorQuery posterior_query(const GpPosterior& posterior, const std::vector<Vector>& xs) {
  require(!xs.empty(), "posterior_query: no query points");
  const Index d = posterior.dim();
  const Index k = static_cast<Index>(xs.size());
  const Index n = posterior.channel_count();
  const Index width = (d + 1) * k;

  PosteriorQuery out{Matrix(d + 1, k), Matrix(width, width)};
  Matrix cross(n, width);
  for (Index i = 0; i < k; ++i) {
    const Matrix cols = posterior.cross_columns(xs[static_cast<std::size_t>(i)]);
    cross.middleCols(i * (d + 1), d + 1) = cols.transpose();
    out.means.col(i) = posterior.mean(xs[static_cast<std::size_t>(i)]);
  }
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) {
      out.covariance.block(i * (d + 1), j * (d + 1), d + 1, d + 1) = joint_covariance(
          xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(j)], posterior.kernel());
    }
  }
  if (n > 0) {
    const Matrix v = posterior.whiten(cross);
    out.covariance.noalias() -= v.transpose() * v;
  }
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

Vector mean_gradient(const GpPosterior& posterior, const Vector& x) {
  require(x.size() == posterior.dim(), "mean_gradient: dimension mismatch");
  if (posterior.channel_count() == 0) return Vector::Zero(posterior.dim());
  return posterior.cross_columns(x).bottomRows(posterior.dim()) * posterior.weights();
}

BivariateProjection::BivariateProjection(const GpPosterior& posterior, Vector theta)
    : posterior_(&posterior), theta_(std::move(theta)) {
  require(theta_.size() == posterior.dim(), "project_directional: direction dimension mismatch");
  require(std::abs(theta_.norm() - 1.0) <= 1e-12, "project_directional: direction must be unit norm");
  value_functional_ = unit_functional(posterior.dim(), 0);
  directional_functional_ = directional_functional(theta_);
}

Eigen::Vector2d BivariateProjection::mean(const Vector& x) const {
  const Vector m = posterior_->mean(x);
  return {m[0], theta_.dot(m.tail(theta_.size()))};
}

Eigen::Matrix2d BivariateProjection::covariance(const Vector& x1, const Vector& x2) const {
  const Vector* c[2] = {&value_functional_, &directional_functional_};
  Eigen::Matrix2d out;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) out(i, j) = posterior_->covariance(x1, *c[i], x2, *c[j]);
  }
  return out;
}

Eigen::Vector2d BivariateProjection::noise() const {
  const KernelSpec& k = posterior_->kernel();
  return {k.noise_variances[0], k.channel_noise(directional_functional_)};
}

BivariateProjection project_directional(const GpPosterior& posterior, const Vector& theta) {
  return BivariateProjection(posterior, theta);
}

}  // namespace dkg
