#include "dkg/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "dkg/design.hpp"
#include "dkg/linalg.hpp"

namespace dkg {

std::vector<Index> ObservationModel::observed_partials(Index dim) const {
  std::vector<Index> out;
  if (mode != FantasyMode::kFullGradient) return out;
  require(partial_mask.empty() || static_cast<Index>(partial_mask.size()) == dim,
          "ObservationModel: partial mask length must equal the dimension");
  for (Index i = 0; i < dim; ++i) {
    if (partial_mask.empty() || partial_mask[static_cast<std::size_t>(i)]) out.push_back(i);
  }
  return out;
}

Index ObservationModel::channels_per_point(Index dim) const {
  switch (mode) {
    case FantasyMode::kDirectional:
      return 2;
    case FantasyMode::kValueOnly:
      return 1;
    case FantasyMode::kFullGradient:
      return 1 + static_cast<Index>(observed_partials(dim).size());
  }
  return 1;
}

void CandidateBatch::validate(const Box& box, const ObservationModel& model) const {
  require(!points.empty(), "CandidateBatch: need at least one point");
  for (const auto& z : points) {
    require(z.size() == box.dim(), "CandidateBatch: point dimension mismatch");
    require(box.contains(z, 1e-12), "CandidateBatch: point outside the domain");
  }
  if (model.uses_direction()) {
    require(direction.has_value(), "CandidateBatch: directional mode needs a direction");
    require(direction->size() == box.dim(), "CandidateBatch: direction dimension mismatch");
    require(std::abs(direction->norm() - 1.0) <= 1e-12, "CandidateBatch: direction must be unit norm");
  }
}

double combined_std_error(const AcquisitionEstimate& a, const AcquisitionEstimate& b) {
  return std::hypot(a.std_error, b.std_error);
}

// ---------------------------------------------------------------------------

KernelExpansion::KernelExpansion(const KernelSpec& kernel, const Matrix& centers, const Matrix& functionals,
                                 const Vector& coefficients, double constant)
    : inv_length_(kernel.length_scales.array().inverse()), constant_(constant) {
  const Index d = kernel.dim();
  std::vector<Index> active;
  for (Index a = 0; a < coefficients.size(); ++a) {
    if (coefficients[a] != 0.0) active.push_back(a);
  }
  const Index n = static_cast<Index>(active.size());
  centers_.resize(n, d);
  derivative_.resize(n, d);
  value_part_.resize(n);
  weight_.resize(n);
  for (Index k = 0; k < n; ++k) {
    const Index a = active[static_cast<std::size_t>(k)];
    centers_.row(k) = centers.col(a).array().transpose() * inv_length_.transpose();
    derivative_.row(k) = functionals.col(a).tail(d).array().transpose() * inv_length_.transpose();
    value_part_[k] = functionals(0, a);
    weight_[k] = kernel.signal_variance * coefficients[a];
  }
  diff_.resize(n, d);
  quad_.resize(n);
  dir_.resize(n);
  g_.resize(n);
}

double KernelExpansion::value(const Vector& x, Vector* gradient) const {
  // With scaled differences r_a = (x - x_a) / l: the kernel factor is
  // exp(-|r_a|^2 / 2) and the functional contributes c0 + (c' / l) . r_a.
  const Index d = inv_length_.size();
  quad_.setZero();
  dir_ = value_part_;
  for (Index i = 0; i < d; ++i) {
    diff_.col(i) = x[i] * inv_length_[i] - centers_.col(i);
    quad_ += diff_.col(i).square();
    dir_ += derivative_.col(i) * diff_.col(i);
  }
  g_ = weight_ * (-0.5 * quad_).exp();
  if (gradient != nullptr) {
    gradient->resize(d);
    for (Index i = 0; i < d; ++i) {
      (*gradient)[i] = inv_length_[i] * ((g_ * derivative_.col(i)).sum() - (g_ * dir_ * diff_.col(i)).sum());
    }
  }
  return constant_ + (g_ * dir_).sum();
}

// ---------------------------------------------------------------------------

SigmaFactor::SigmaFactor(const GpPosterior& posterior, const CandidateBatch& batch, ObservationModel model)
    : posterior_(&posterior), batch_(batch), model_(std::move(model)) {
  const Index d = posterior.dim();
  const Index q = batch_.size();
  require(q >= 1, "SigmaFactor: empty batch");
  for (const auto& z : batch_.points) require(z.size() == d, "SigmaFactor: batch dimension mismatch");
  if (model_.uses_direction()) {
    require(batch_.direction && batch_.direction->size() == d, "SigmaFactor: missing direction");
    require(std::abs(batch_.direction->norm() - 1.0) <= 1e-12, "SigmaFactor: direction must be unit norm");
  }

  // Channel-major layout.
  std::vector<Vector> type_functionals{unit_functional(d, 0)};
  std::vector<bool> type_directional{false};
  if (model_.mode == FantasyMode::kDirectional) {
    type_functionals.push_back(directional_functional(*batch_.direction));
    type_directional.push_back(true);
  } else if (model_.mode == FantasyMode::kFullGradient) {
    for (Index i : model_.observed_partials(d)) {
      type_functionals.push_back(unit_functional(d, i + 1));
      type_directional.push_back(false);
    }
  }
  const Index types = static_cast<Index>(type_functionals.size());
  const Index m = types * q;
  fantasy_functionals_.resize(m, d + 1);
  for (Index t = 0; t < types; ++t) {
    for (Index i = 0; i < q; ++i) {
      fantasy_point_.push_back(i);
      fantasy_directional_.push_back(type_directional[static_cast<std::size_t>(t)]);
      fantasy_functionals_.row(t * q + i) = type_functionals[static_cast<std::size_t>(t)].transpose();
    }
  }

  const Index n = posterior.channel_count();
  cross_.resize(n, m);
  if (n > 0) {
    for (Index i = 0; i < q; ++i) {
      const Matrix cols = posterior.cross_columns(batch_.points[static_cast<std::size_t>(i)]);
      for (Index a = 0; a < m; ++a) {
        if (fantasy_point_[static_cast<std::size_t>(a)] != i) continue;
        cross_.col(a) = cols.transpose() * fantasy_functionals_.row(a).transpose();
      }
    }
  }
  solved_ = posterior.solve(cross_);

  const KernelSpec& kernel = posterior.kernel();
  Matrix sigma(m, m);
  double prior_diag = 0.0;
  for (Index a = 0; a < m; ++a) {
    const Vector ca = fantasy_functionals_.row(a).transpose();
    const Vector& za = batch_.points[static_cast<std::size_t>(fantasy_point_[static_cast<std::size_t>(a)])];
    for (Index b = a; b < m; ++b) {
      const Vector cb = fantasy_functionals_.row(b).transpose();
      const Vector& zb = batch_.points[static_cast<std::size_t>(fantasy_point_[static_cast<std::size_t>(b)])];
      double v = functional_covariance(za, zb, ca, cb, kernel);
      if (a == b) prior_diag += v + kernel.channel_noise(ca);
      if (n > 0) v -= cross_.col(a).dot(solved_.col(b));
      sigma(a, b) = v;
      sigma(b, a) = v;
    }
    sigma(a, a) += kernel.channel_noise(ca);
  }
  prior_diag /= static_cast<double>(m);
  try {
    chol_ = jittered_cholesky(sigma, prior_diag).lower;
  } catch (const CholeskyFailure& failure) {
    throw SingularModelError(std::string("fantasy covariance singular: ") + failure.what(), -1);
  }
  const Matrix inv_chol = chol_.triangularView<Eigen::Lower>().solve(Matrix::Identity(m, m));
  inv_chol_t_ = inv_chol.transpose();

  all_centers_.resize(d, n + m);
  all_functionals_.resize(d + 1, n + m);
  if (n > 0) {
    all_centers_.leftCols(n) = posterior.channel_points();
    all_functionals_.leftCols(n) = posterior.channel_functionals_t();
  }
  for (Index a = 0; a < m; ++a) {
    all_centers_.col(n + a) = batch_.points[static_cast<std::size_t>(fantasy_point_[static_cast<std::size_t>(a)])];
    all_functionals_.col(n + a) = fantasy_functionals_.row(a).transpose();
  }
  coeff_map_.resize(n + m, m);
  if (n > 0) coeff_map_.topRows(n) = -solved_ * inv_chol_t_;
  coeff_map_.bottomRows(m) = inv_chol_t_;
}

Vector SigmaFactor::row(const Vector& x) const {
  require(x.size() == posterior_->dim(), "SigmaFactor::row: dimension mismatch");
  const Index total = all_centers_.cols();
  const KernelSpec& kernel = posterior_->kernel();
  Vector k0(total);
  Vector column(posterior_->dim() + 1);
  for (Index a = 0; a < total; ++a) {
    column.setZero();
    accumulate_kernel_column(x, all_centers_.col(a), all_functionals_.col(a), 1.0, kernel, column);
    k0[a] = column[0];
  }
  return coeff_map_.transpose() * k0;
}

KernelExpansion SigmaFactor::fantasy_mean(const Vector& w) const {
  require(w.size() == fantasy_dim(), "SigmaFactor: fantasy draw has the wrong dimension");
  const Index n = posterior_->channel_count();
  Vector coeff = coeff_map_ * w;
  if (n > 0) coeff.head(n) += posterior_->weights();
  return KernelExpansion(posterior_->kernel(), all_centers_, all_functionals_, std::move(coeff),
                         posterior_->prior_mean());
}

namespace {

// w^T Phi(M) r with Phi keeping the lower triangle and halving the diagonal.
double phi_form(const Matrix& mat, const Vector& w, const Vector& r) {
  double acc = 0.0;
  for (Index j = 0; j < mat.cols(); ++j) {
    acc += 0.5 * w[j] * mat(j, j) * r[j];
    for (Index i = j + 1; i < mat.rows(); ++i) acc += w[i] * mat(i, j) * r[j];
  }
  return acc;
}

}  // namespace

Vector SigmaFactor::row_dot_gradient(const Vector& x_fixed, const Vector& w) const {
  // s = b D^{-T} w with b[a] = Cov_n(f(x), channel a). For a parameter p,
  // ds = db . u - w^T Phi(D^{-1} dSigma D^{-T}) r, u = D^{-T} w, r = D^{-1} b.
  const GpPosterior& post = *posterior_;
  const KernelSpec& kernel = post.kernel();
  const Index d = post.dim();
  const Index q = batch_.size();
  const Index m = fantasy_dim();
  const Index n = post.channel_count();
  require(w.size() == m, "row_dot_gradient: fantasy draw has the wrong dimension");
  require(x_fixed.size() == d, "row_dot_gradient: dimension mismatch");

  const Vector e0 = unit_functional(d, 0);
  const Vector u = inv_chol_t_ * w;
  Vector h = Vector::Zero(n);
  if (n > 0) h = post.solve(post.cross_covariance(x_fixed, e0));

  auto point_of = [&](Index a) -> const Vector& {
    return batch_.points[static_cast<std::size_t>(fantasy_point_[static_cast<std::size_t>(a)])];
  };
  auto functional_of = [&](Index a) -> Vector { return fantasy_functionals_.row(a).transpose(); };

  Vector b(m);
  for (Index a = 0; a < m; ++a) {
    b[a] = functional_covariance(x_fixed, point_of(a), e0, functional_of(a), kernel);
    if (n > 0) b[a] -= h.dot(cross_.col(a));
  }
  const Vector r = inv_chol_t_.transpose() * b;  // D^{-1} b

  const Index theta_dim = model_.uses_direction() ? d : 0;
  Vector grad = Vector::Zero(q * d + theta_dim);

  auto contribution = [&](const Vector& db, const Matrix& dsigma) {
    const Matrix inner = inv_chol_t_.transpose() * dsigma * inv_chol_t_;
    return db.dot(u) - phi_form(inner, w, r);
  };

  for (Index i = 0; i < q; ++i) {
    const Vector& zi = batch_.points[static_cast<std::size_t>(i)];
    std::vector<Index> own;
    for (Index a = 0; a < m; ++a) {
      if (fantasy_point_[static_cast<std::size_t>(a)] == i) own.push_back(a);
    }
    // d cross_(:, a) / d z_i, one n x d block per owned channel.
    std::vector<Matrix> dcross(own.size(), Matrix::Zero(n, d));
    for (std::size_t k = 0; k < own.size(); ++k) {
      const Vector ca = functional_of(own[k]);
      for (Index bidx = 0; bidx < n; ++bidx) {
        dcross[k].row(bidx) = functional_covariance_grad(zi, post.channel_points().col(bidx), ca,
                                                         post.channel_functionals_t().col(bidx), kernel)
                                  .transpose();
      }
    }
    // Direct prior term derivatives and db for owned channels.
    std::vector<Matrix> direct(own.size(), Matrix::Zero(m, d));
    Matrix db_rows = Matrix::Zero(own.size(), d);
    for (std::size_t k = 0; k < own.size(); ++k) {
      const Index a = own[k];
      const Vector ca = functional_of(a);
      for (Index ap = 0; ap < m; ++ap) {
        if (fantasy_point_[static_cast<std::size_t>(ap)] == i) continue;
        direct[k].row(ap) = functional_covariance_grad(zi, point_of(ap), ca, functional_of(ap), kernel).transpose();
      }
      db_rows.row(static_cast<Index>(k)) =
          -functional_covariance_grad(x_fixed, zi, e0, ca, kernel).transpose();
    }
    for (Index coord = 0; coord < d; ++coord) {
      Matrix dsigma = Matrix::Zero(m, m);
      Vector db = Vector::Zero(m);
      for (std::size_t k = 0; k < own.size(); ++k) {
        const Index a = own[k];
        for (Index ap = 0; ap < m; ++ap) {
          const double v = direct[k](ap, coord);
          dsigma(a, ap) += v;
          dsigma(ap, a) += v;
        }
        db[a] = db_rows(static_cast<Index>(k), coord);
        if (n > 0) {
          const Vector dk = dcross[k].col(coord);
          db[a] -= h.dot(dk);
          const Vector corr = solved_.transpose() * dk;  // A^T dK(:, a)
          dsigma.row(a) -= corr.transpose();
          dsigma.col(a) -= corr;
        }
      }
      grad[i * d + coord] = contribution(db, dsigma);
    }
  }

  if (theta_dim > 0) {
    std::vector<Matrix> point_cols;
    if (n > 0) {
      for (Index i = 0; i < q; ++i) point_cols.push_back(post.cross_columns(batch_.points[static_cast<std::size_t>(i)]));
    }
    const Vector& theta = *batch_.direction;
    for (Index coord = 0; coord < d; ++coord) {
      const Vector eps = unit_functional(d, coord + 1);
      Matrix dsigma = Matrix::Zero(m, m);
      Vector db = Vector::Zero(m);
      for (Index a = 0; a < m; ++a) {
        if (!fantasy_directional_[static_cast<std::size_t>(a)]) continue;
        for (Index ap = 0; ap < m; ++ap) {
          const double v = functional_covariance(point_of(a), point_of(ap), eps, functional_of(ap), kernel);
          dsigma(a, ap) += v;
          dsigma(ap, a) += v;
        }
        dsigma(a, a) += 2.0 * theta[coord] * kernel.noise_variances[coord + 1];
        db[a] = functional_covariance(x_fixed, point_of(a), e0, eps, kernel);
        if (n > 0) {
          const Vector dk =
              point_cols[static_cast<std::size_t>(fantasy_point_[static_cast<std::size_t>(a)])].row(coord + 1).transpose();
          db[a] -= h.dot(dk);
          const Vector corr = solved_.transpose() * dk;
          dsigma.row(a) -= corr.transpose();
          dsigma.col(a) -= corr;
        }
      }
      grad[q * d + coord] = contribution(db, dsigma);
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------

namespace {

struct Evaluated {
  Vector x;
  double value;
};

// Projected gradient with Barzilai-Borwein steps and Armijo backtracking.
template <class Objective>
Evaluated polish(const Objective& objective, const Box& box, Evaluated start, const InnerOptions& options) {
  Vector grad;
  double f = objective.value(start.x, &grad);
  Vector x = start.x;
  if (!grad.allFinite()) return start;
  double step = 0.1;
  for (int it = 0; it < options.polish_steps; ++it) {
    Vector trial;
    double f_trial = 0.0;
    Vector g_trial;
    bool accepted = false;
    for (int back = 0; back < 40; ++back) {
      trial = box.project(x - step * grad);
      f_trial = objective.value(trial, &g_trial);
      const double decrease = grad.dot(x - trial);
      if (std::isfinite(f_trial) && f_trial <= f - 1e-4 * decrease) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !g_trial.allFinite()) break;
    const Vector s = trial - x;
    const Vector y = g_trial - grad;
    const double moved = s.norm();
    x = trial;
    const double df = f - f_trial;
    f = f_trial;
    grad = g_trial;
    if (moved <= options.polish_tolerance || df <= 1e-16 * (1.0 + std::abs(f))) break;
    if ((x - box.project(x - grad)).lpNorm<Eigen::Infinity>() <= options.stationarity_tolerance) break;
    const double sy = s.dot(y);
    step = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-8, 1e8) : std::min(step * 2.0, 1e8);
  }
  if (f < start.value) return {x, f};
  return start;
}

struct FunctionObjective {
  const SmoothObjective* f;
  double value(const Vector& x, Vector* gradient = nullptr) const { return (*f)(x, gradient); }
};

template <class Objective>
InnerResult minimize_impl(const Objective& objective, const SearchSpace& space, const std::vector<Vector>& starts,
                          const InnerOptions& options) {
  InnerResult result;
  result.value = std::numeric_limits<double>::infinity();
  if (space.is_finite()) {
    for (const auto& x : space.finite) {
      const double v = objective.value(x);
      if (v < result.value) {
        result.value = v;
        result.x = x;
      }
    }
    return result;
  }
  require(!starts.empty(), "inner_minimize: need at least one start");
  const Box& box = space.box;
  Vector grad;
  bool have = false;
  Evaluated best{Vector(), std::numeric_limits<double>::infinity()};
  for (const auto& start : starts) {
    Vector x = box.project(start);
    double f = objective.value(x, &grad);
    Evaluated local{x, f};
    bool aborted = false;
    for (int t = 1; t <= options.steps; ++t) {
      if (!grad.allFinite() || !std::isfinite(f)) {
        aborted = true;
        break;
      }
      const double lr = options.learning_rate / std::pow(static_cast<double>(t), options.decay);
      x = box.project(x - lr * grad);
      f = objective.value(x, &grad);
      if (std::isfinite(f) && f < local.value) local = {x, f};
    }
    if (aborted) {
      ++result.aborted_starts;
      std::cerr << "inner_minimize: non-finite gradient, start abandoned\n";
    }
    if (!std::isfinite(local.value)) continue;
    // Each start is refined to its own local minimum; the best wins.
    if (options.polish_steps > 0) local = polish(objective, box, local, options);
    if (!have || local.value < best.value) {
      best = local;
      have = true;
    }
  }
  if (!have) {
    result.x = box.project(starts.front());
    result.value = objective.value(result.x);
    return result;
  }
  result.x = best.x;
  result.value = best.value;
  return result;
}

}  // namespace

InnerResult inner_minimize(const KernelExpansion& objective, const SearchSpace& space,
                           const std::vector<Vector>& starts, const InnerOptions& options) {
  return minimize_impl(objective, space, starts, options);
}

InnerResult inner_minimize(const SmoothObjective& objective, const SearchSpace& space,
                           const std::vector<Vector>& starts, const InnerOptions& options) {
  return minimize_impl(FunctionObjective{&objective}, space, starts, options);
}

InnerResult minimize_posterior_mean(const GpPosterior& posterior, const SearchSpace& space,
                                    const std::vector<Vector>& starts, const InnerOptions& options) {
  const Index n = posterior.channel_count();
  KernelExpansion mean(posterior.kernel(), posterior.channel_points(), posterior.channel_functionals_t(),
                       n > 0 ? posterior.weights() : Vector(), posterior.prior_mean());
  if (space.is_finite()) return inner_minimize(mean, space, starts, options);
  std::vector<Vector> all = starts;
  if (all.empty()) all.push_back(0.5 * (space.box.lower + space.box.upper));
  return inner_minimize(mean, space, all, options);
}

std::vector<Vector> inner_starts(const GpPosterior& posterior, const SearchSpace& space,
                                 const InnerOptions& options, std::uint64_t seed) {
  if (space.is_finite()) return {};
  require(options.starts >= 1, "inner_starts: need at least one start");
  Rng rng = make_rng(seed, Stream::kInnerStarts);
  std::vector<Vector> starts = latin_hypercube(space.box, std::max(options.starts - 1, 1), rng);
  if (options.starts == 1) starts.clear();

  // The posterior mean minimizer: descend from the Latin-hypercube points and
  // the best evaluated location.
  std::vector<Vector> seeds = starts.empty() ? latin_hypercube(space.box, 1, rng) : starts;
  double best_value = std::numeric_limits<double>::infinity();
  const Vector* best_loc = nullptr;
  for (const auto& rec : posterior.history()) {
    if (!space.box.contains(rec.location, 1e-12)) continue;
    const double v = posterior.mean_value(rec.location);
    if (v < best_value) {
      best_value = v;
      best_loc = &rec.location;
    }
  }
  if (best_loc != nullptr) seeds.push_back(*best_loc);
  starts.push_back(minimize_posterior_mean(posterior, space, seeds, options).x);
  return starts;
}

InnerResult inner_minimize(const SigmaFactor& factor, const FantasyDraw& draw, const SearchSpace& space,
                           const InnerOptions& options, std::uint64_t seed) {
  const auto starts = inner_starts(factor.posterior(), space, options, seed);
  return inner_minimize(factor.fantasy_mean(draw.w), space, starts, options);
}

FantasyDraw fantasy_draw(std::uint64_t seed, Index index, Index dim) {
  Rng rng = make_rng(seed, Stream::kFantasy, static_cast<std::uint64_t>(index));
  return {standard_normal(rng, dim)};
}

// ---------------------------------------------------------------------------

Vector KnowledgeGradient::draw_values(const GpPosterior& posterior, const CandidateBatch& batch,
                                      const SearchSpace& space, Index num_fantasies, std::uint64_t seed) const {
  require(num_fantasies >= 1, "KG: need at least one fantasy");
  const SigmaFactor factor(posterior, batch, model);
  const Index m = factor.fantasy_dim();
  Vector values(num_fantasies);

  if (space.is_finite()) {
    const Index k = static_cast<Index>(space.finite.size());
    Vector mu(k);
    Matrix rows(k, m);
    for (Index j = 0; j < k; ++j) {
      mu[j] = posterior.mean_value(space.finite[static_cast<std::size_t>(j)]);
      rows.row(j) = factor.row(space.finite[static_cast<std::size_t>(j)]).transpose();
    }
    const double base = mu.minCoeff();
    for (Index f = 0; f < num_fantasies; ++f) {
      const Vector w = fantasy_draw(seed, f, m).w;
      values[f] = base - (mu + rows * w).minCoeff();
    }
    return values;
  }

  const auto starts = inner_starts(posterior, space, inner, seed);
  const double base = minimize_posterior_mean(posterior, space, starts, inner).value;
  for (Index f = 0; f < num_fantasies; ++f) {
    const Vector w = fantasy_draw(seed, f, m).w;
    values[f] = base - inner_minimize(factor.fantasy_mean(w), space, starts, inner).value;
  }
  return values;
}

AcquisitionEstimate KnowledgeGradient::value(const GpPosterior& posterior, const CandidateBatch& batch,
                                             const SearchSpace& space, Index num_fantasies,
                                             std::uint64_t seed) const {
  const Vector values = draw_values(posterior, batch, space, num_fantasies, seed);
  AcquisitionEstimate est;
  est.num_fantasies = num_fantasies;
  est.value = values.mean();
  if (num_fantasies > 1) {
    const double var = (values.array() - est.value).square().sum() / static_cast<double>(num_fantasies - 1);
    est.std_error = std::sqrt(var / static_cast<double>(num_fantasies));
  }
  return est;
}

Vector KnowledgeGradient::gradient(const GpPosterior& posterior, const CandidateBatch& batch,
                                   const FantasyDraw& draw, const SearchSpace& space,
                                   const std::vector<Vector>& starts) const {
  const SigmaFactor factor(posterior, batch, model);
  const InnerResult best = inner_minimize(factor.fantasy_mean(draw.w), space, starts, inner);
  Vector grad = -factor.row_dot_gradient(best.x, draw.w);
  if (model.uses_direction()) {
    const Index d = posterior.dim();
    const Index offset = batch.size() * d;
    const Vector& theta = *batch.direction;
    Vector g_theta = grad.segment(offset, d);
    g_theta -= theta * theta.dot(g_theta);
    grad.segment(offset, d) = g_theta;
  }
  return grad;
}

AcquisitionEstimate dkg_value(const GpPosterior& posterior, const CandidateBatch& batch, const SearchSpace& space,
                              Index num_fantasies, std::uint64_t seed, const ObservationModel& model,
                              const InnerOptions& inner) {
  return KnowledgeGradient{model, inner}.value(posterior, batch, space, num_fantasies, seed);
}

Vector dkg_gradient(const GpPosterior& posterior, const CandidateBatch& batch, const FantasyDraw& draw,
                    const SearchSpace& space, std::uint64_t seed, const ObservationModel& model,
                    const InnerOptions& inner) {
  const auto starts = inner_starts(posterior, space, inner, seed);
  return KnowledgeGradient{model, inner}.gradient(posterior, batch, draw, space, starts);
}

AcquisitionEstimate kg_value(const GpPosterior& posterior, const CandidateBatch& batch, const SearchSpace& space,
                             Index num_fantasies, std::uint64_t seed, const InnerOptions& inner) {
  return dkg_value(posterior, batch, space, num_fantasies, seed, ObservationModel::value_only(), inner);
}

Vector kg_gradient(const GpPosterior& posterior, const CandidateBatch& batch, const FantasyDraw& draw,
                   const SearchSpace& space, std::uint64_t seed, const InnerOptions& inner) {
  return dkg_gradient(posterior, batch, draw, space, seed, ObservationModel::value_only(), inner);
}

AcquisitionEstimate average_estimates(std::span<const AcquisitionEstimate> estimates) {
  require(!estimates.empty(), "average_estimates: need at least one estimate");
  AcquisitionEstimate out;
  double var = 0.0;
  for (const auto& e : estimates) {
    out.value += e.value;
    var += e.std_error * e.std_error;
    out.num_fantasies += e.num_fantasies;
  }
  const double m = static_cast<double>(estimates.size());
  out.value /= m;
  out.std_error = std::sqrt(var) / m;
  return out;
}

AcquisitionEstimate integrated_acquisition(std::span<const GpPosterior> posteriors, const CandidateBatch& batch,
                                           const SearchSpace& space, const KnowledgeGradient& kg,
                                           Index num_fantasies, std::uint64_t seed) {
  require(!posteriors.empty(), "integrated_acquisition: need at least one hyperparameter sample");
  if (posteriors.size() == 1) return kg.value(posteriors[0], batch, space, num_fantasies, seed);
  std::vector<AcquisitionEstimate> parts;
  parts.reserve(posteriors.size());
  for (std::size_t j = 0; j < posteriors.size(); ++j) {
    parts.push_back(kg.value(posteriors[j], batch, space, num_fantasies, seed));
  }
  return average_estimates(parts);
}

// ---------------------------------------------------------------------------

namespace {

OuterResult finite_outer(std::span<const GpPosterior> posteriors, const SearchSpace& space, Index q,
                         const AcquisitionOptions& options, std::uint64_t seed) {
  const KnowledgeGradient kg{options.model, options.inner};
  const std::uint64_t eval_seed = derive_seed(seed, Stream::kRerank);
  std::vector<Vector> directions;
  const Index d = space.dim();
  if (options.model.uses_direction()) {
    for (Index i = 0; i < d; ++i) directions.push_back(Vector::Unit(d, i));
  } else {
    directions.emplace_back();
  }
  OuterResult best;
  best.value.value = -std::numeric_limits<double>::infinity();
  for (const auto& theta : directions) {
    CandidateBatch batch;
    if (options.model.uses_direction()) batch.direction = theta;
    AcquisitionEstimate current;
    for (Index slot = 0; slot < q; ++slot) {
      double slot_best = -std::numeric_limits<double>::infinity();
      Vector chosen;
      AcquisitionEstimate chosen_est;
      for (const auto& x : space.finite) {
        CandidateBatch trial = batch;
        trial.points.push_back(x);
        AcquisitionEstimate est;
        try {
          est = integrated_acquisition(posteriors, trial, space, kg, options.outer.rerank_fantasies, eval_seed);
        } catch (const SingularModelError&) {
          continue;
        }
        if (est.value > slot_best) {
          slot_best = est.value;
          chosen = x;
          chosen_est = est;
        }
      }
      require(chosen.size() > 0, "outer_maximize: no feasible candidate in the finite domain");
      batch.points.push_back(chosen);
      current = chosen_est;
    }
    if (current.value > best.value.value) best = {batch, current};
  }
  return best;
}

}  // namespace

OuterResult outer_maximize(std::span<const GpPosterior> posteriors, const SearchSpace& space, Index q,
                           const AcquisitionOptions& options, std::uint64_t seed) {
  require(!posteriors.empty(), "outer_maximize: need at least one posterior");
  require(q >= 1, "outer_maximize: batch size must be positive");
  require(options.outer.restarts >= 1 && options.outer.sga_steps >= 1,
          "outer_maximize: restarts and steps must be positive");
  if (space.is_finite()) return finite_outer(posteriors, space, q, options, seed);

  const Index d = space.dim();
  const KnowledgeGradient kg{options.model, options.inner};
  const bool directional = options.model.uses_direction();
  const double margin = options.outer.margin;
  const Index m = options.model.channels_per_point(d) * q;

  std::vector<std::vector<Vector>> starts;
  for (std::size_t j = 0; j < posteriors.size(); ++j) {
    starts.push_back(inner_starts(posteriors[j], space, options.inner, derive_seed(seed, Stream::kInnerStarts, j)));
  }

  std::vector<CandidateBatch> candidates;
  for (int r = 0; r < options.outer.restarts; ++r) {
    Rng rng = make_rng(seed, Stream::kOuterInit, static_cast<std::uint64_t>(r));
    CandidateBatch batch;
    for (auto& z : latin_hypercube(space.box, q, rng)) batch.points.push_back(space.box.project(z, margin));
    if (directional) batch.direction = random_direction(rng, d);
    candidates.push_back(batch);

    for (int t = 1; t <= options.outer.sga_steps; ++t) {
      Vector grad = Vector::Zero(q * d + (directional ? d : 0));
      bool ok = true;
      for (std::size_t j = 0; j < posteriors.size() && ok; ++j) {
        const FantasyDraw draw = fantasy_draw(
            derive_seed(seed, Stream::kOuterStep, static_cast<std::uint64_t>(r), static_cast<std::uint64_t>(t)), static_cast<Index>(j), m);
        try {
          grad += kg.gradient(posteriors[j], batch, draw, space, starts[j]);
        } catch (const SingularModelError&) {
          ok = false;
        }
      }
      if (!ok || !grad.allFinite()) break;
      grad /= static_cast<double>(posteriors.size());
      const double lr = options.outer.learning_rate / std::pow(static_cast<double>(t), options.outer.decay);
      for (Index i = 0; i < q; ++i) {
        auto& z = batch.points[static_cast<std::size_t>(i)];
        z = space.box.project(z + lr * grad.segment(i * d, d), margin);
      }
      if (directional) {
        Vector theta = *batch.direction + lr * grad.segment(q * d, d);
        const double norm = theta.norm();
        if (norm > 1e-12) batch.direction = theta / norm;
      }
    }
    candidates.push_back(batch);
  }

  const std::uint64_t eval_seed = derive_seed(seed, Stream::kRerank);
  OuterResult best;
  best.value.value = -std::numeric_limits<double>::infinity();
  for (const auto& cand : candidates) {
    AcquisitionEstimate est;
    try {
      est = integrated_acquisition(posteriors, cand, space, kg, options.outer.rerank_fantasies, eval_seed);
    } catch (const SingularModelError&) {
      continue;
    }
    if (est.value > best.value.value) best = {cand, est};
  }
  require(!best.batch.points.empty(), "outer_maximize: every candidate batch was singular");
  return best;
}

OuterResult kg_maximize(std::span<const GpPosterior> posteriors, const SearchSpace& space, Index q,
                        AcquisitionOptions options, std::uint64_t seed) {
  options.model = ObservationModel::value_only();
  return outer_maximize(posteriors, space, q, options, seed);
}

}  // namespace dkg
