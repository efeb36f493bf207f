#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dkg/acquisition.hpp"
#include "dkg/design.hpp"
#include "dkg/linalg.hpp"

namespace dkg {

namespace {

constexpr Index kPoolSize = 256;

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Value-channel posterior at a fixed set of points, with whitened cross
// covariances cached so joint covariances of any subset are cheap.
struct ValueCache {
  const GpPosterior* posterior;
  std::vector<Vector> points;
  Vector mean;
  Matrix whitened;  // n x k

  ValueCache(const GpPosterior& p, std::vector<Vector> pts) : posterior(&p), points(std::move(pts)) {
    const Index k = static_cast<Index>(points.size());
    const Index n = p.channel_count();
    const Vector e0 = unit_functional(p.dim(), 0);
    mean.resize(k);
    Matrix cross(n, k);
    for (Index i = 0; i < k; ++i) {
      mean[i] = p.mean_value(points[static_cast<std::size_t>(i)]);
      if (n > 0) cross.col(i) = p.cross_covariance(points[static_cast<std::size_t>(i)], e0);
    }
    whitened = n > 0 ? p.whiten(cross) : Matrix(0, k);
  }

  double cov(Index i, Index j) const {
    double v = posterior->kernel().value(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
    if (whitened.rows() > 0) v -= whitened.col(i).dot(whitened.col(j));
    return v;
  }

  Index add(const Vector& x) {
    const Index n = posterior->channel_count();
    points.push_back(x);
    const Index k = static_cast<Index>(points.size());
    mean.conservativeResize(k);
    mean[k - 1] = posterior->mean_value(x);
    if (n > 0) {
      whitened.conservativeResize(n, k);
      whitened.col(k - 1) = posterior->whiten(posterior->cross_covariance(x, unit_functional(posterior->dim(), 0)));
    } else {
      whitened.resize(0, k);
    }
    return k - 1;
  }
};

// Monte-Carlo batch EI for the points idx of a cache, using fixed normals.
double batch_ei(const ValueCache& cache, const std::vector<Index>& idx, double incumbent, const Matrix& normals,
                Vector* per_draw = nullptr) {
  const Index q = static_cast<Index>(idx.size());
  Matrix cov(q, q);
  Vector mu(q);
  for (Index a = 0; a < q; ++a) {
    mu[a] = cache.mean[idx[static_cast<std::size_t>(a)]];
    for (Index b = 0; b <= a; ++b) {
      cov(a, b) = cache.cov(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
      cov(b, a) = cov(a, b);
    }
  }
  const double scale = std::max(cache.posterior->kernel().signal_variance, 1e-300);
  const Matrix chol = jittered_cholesky(cov, scale).lower;
  const Index draws = normals.cols();
  double total = 0.0;
  if (per_draw != nullptr) per_draw->resize(draws);
  for (Index s = 0; s < draws; ++s) {
    const Vector f = mu + chol * normals.col(s).head(q);
    const double imp = std::max(incumbent - f.minCoeff(), 0.0);
    if (per_draw != nullptr) (*per_draw)[s] = imp;
    total += imp;
  }
  return total / static_cast<double>(draws);
}

Matrix crn_normals(std::uint64_t seed, Index q, Index draws) {
  Matrix out(q, draws);
  for (Index s = 0; s < draws; ++s) out.col(s) = fantasy_draw(seed, s, q).w;
  return out;
}

std::vector<Vector> candidate_pool(const GpPosterior& posterior, const SearchSpace& space, std::uint64_t seed) {
  if (space.is_finite()) return space.finite;
  Rng rng = make_rng(seed, Stream::kPool);
  std::vector<Vector> pool = latin_hypercube(space.box, kPoolSize, rng);
  for (const auto& rec : posterior.history()) {
    if (space.box.contains(rec.location, 1e-12)) pool.push_back(rec.location);
  }
  return pool;
}

// Coordinate pattern search maximizing score over the box.
template <class Score>
Vector pattern_search(const Box& box, Vector x, double fx, Score&& score, double margin = 0.0) {
  Vector step = 0.1 * box.width();
  const double floor = 1e-4;
  int evaluations = 0;
  while ((step.array() / box.width().array()).maxCoeff() > floor && evaluations < 400) {
    bool improved = false;
    for (Index i = 0; i < x.size(); ++i) {
      for (double sign : {1.0, -1.0}) {
        Vector trial = x;
        trial[i] += sign * step[i];
        trial = box.project(trial, margin);
        if (trial == x) continue;
        const double ft = score(trial);
        ++evaluations;
        if (ft > fx) {
          x = trial;
          fx = ft;
          improved = true;
          break;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return x;
}

}  // namespace

double incumbent_value(const GpPosterior& posterior) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& rec : posterior.history()) best = std::min(best, posterior.mean_value(rec.location));
  return std::isfinite(best) ? best : posterior.prior_mean();
}

double ei_value(const GpPosterior& posterior, const Vector& x, double incumbent) {
  const double mu = posterior.mean_value(x);
  const double var = std::max(posterior.variance(x), 0.0);
  const double s = std::sqrt(var);
  const double gap = incumbent - mu;
  if (s <= 1e-12 * std::max(1.0, std::abs(gap))) return std::max(gap, 0.0);
  const double z = gap / s;
  return gap * normal_cdf(z) + s * normal_pdf(z);
}

double ei_value(const GpPosterior& posterior, const Vector& x) {
  return ei_value(posterior, x, incumbent_value(posterior));
}

AcquisitionEstimate d_ei_value(const GpPosterior& posterior, const CandidateBatch& batch, Index num_fantasies,
                               std::uint64_t seed) {
  require(num_fantasies >= 1, "d_ei_value: need at least one fantasy");
  require(batch.size() >= 1, "d_ei_value: empty batch");
  const ValueCache cache(posterior, batch.points);
  std::vector<Index> idx(batch.points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Index>(i);
  Vector draws;
  AcquisitionEstimate est;
  est.num_fantasies = num_fantasies;
  est.value = batch_ei(cache, idx, incumbent_value(posterior), crn_normals(seed, batch.size(), num_fantasies), &draws);
  if (num_fantasies > 1) {
    const double var = (draws.array() - est.value).square().sum() / static_cast<double>(num_fantasies - 1);
    est.std_error = std::sqrt(var / static_cast<double>(num_fantasies));
  }
  return est;
}

OuterResult ei_maximize(std::span<const GpPosterior> posteriors, const SearchSpace& space, Index q,
                        Index num_fantasies, std::uint64_t seed) {
  require(!posteriors.empty(), "ei_maximize: need at least one posterior");
  require(q >= 1 && num_fantasies >= 1, "ei_maximize: batch size and fantasies must be positive");
  const Matrix normals = crn_normals(derive_seed(seed, Stream::kRerank), q, num_fantasies);
  const std::vector<Vector> pool = candidate_pool(posteriors[0], space, seed);

  std::vector<ValueCache> caches;
  std::vector<double> incumbents;
  for (const auto& p : posteriors) {
    caches.emplace_back(p, pool);
    incumbents.push_back(incumbent_value(p));
  }
  const double m = static_cast<double>(posteriors.size());

  CandidateBatch batch;
  std::vector<Index> chosen;
  auto score_idx = [&](std::vector<Index>& idx) {
    double total = 0.0;
    for (std::size_t j = 0; j < caches.size(); ++j) total += batch_ei(caches[j], idx, incumbents[j], normals);
    return total / m;
  };

  double value = 0.0;
  for (Index slot = 0; slot < q; ++slot) {
    double best = -1.0;
    Index best_idx = -1;
    for (Index c = 0; c < static_cast<Index>(pool.size()); ++c) {
      if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) continue;
      std::vector<Index> idx = chosen;
      idx.push_back(c);
      const double v = score_idx(idx);
      if (v > best) {
        best = v;
        best_idx = c;
      }
    }
    require(best_idx >= 0, "ei_maximize: candidate pool exhausted");
    Index final_idx = best_idx;
    if (!space.is_finite()) {
      auto score_point = [&](const Vector& x) {
        double total = 0.0;
        for (std::size_t j = 0; j < caches.size(); ++j) {
          ValueCache local = caches[j];
          const Index k = local.add(x);
          std::vector<Index> idx = chosen;
          idx.push_back(k);
          total += batch_ei(local, idx, incumbents[j], normals);
        }
        return total / m;
      };
      const Vector refined = pattern_search(space.box, pool[static_cast<std::size_t>(best_idx)], best, score_point);
      if (refined != pool[static_cast<std::size_t>(best_idx)]) {
        for (auto& cache : caches) final_idx = cache.add(refined);
        best = score_point(refined);
      }
    }
    chosen.push_back(final_idx);
    batch.points.push_back(caches[0].points[static_cast<std::size_t>(final_idx)]);
    value = best;
  }

  OuterResult out;
  out.batch = batch;
  std::vector<AcquisitionEstimate> parts;
  for (const auto& p : posteriors) parts.push_back(d_ei_value(p, batch, num_fantasies, derive_seed(seed, Stream::kRerank)));
  out.value = average_estimates(parts);
  (void)value;
  return out;
}

GpPosterior condition_on_pending(const GpPosterior& posterior, const std::vector<Vector>& pending,
                                 const ObservationModel& model) {
  require(!model.uses_direction(), "condition_on_pending: directional fantasies are not supported");
  std::vector<ObservationRecord> history = posterior.history();
  const Index d = posterior.dim();
  const auto partials = model.observed_partials(d);
  for (const auto& z : pending) {
    const Vector mu = posterior.mean(z);
    ObservationRecord rec;
    rec.location = z;
    rec.value = mu[0];
    if (!partials.empty()) {
      rec.partials.assign(static_cast<std::size_t>(d), std::nullopt);
      for (Index i : partials) rec.partials[static_cast<std::size_t>(i)] = mu[i + 1];
    }
    history.push_back(std::move(rec));
  }
  return GpPosterior(posterior.hyper(), std::move(history));
}

CandidateBatch ucb_pe_select(const GpPosterior& posterior, const SearchSpace& space, Index q, double beta,
                             const ObservationModel& model, std::uint64_t seed) {
  require(q >= 1, "ucb_pe_select: batch size must be positive");
  require(beta >= 0.0, "ucb_pe_select: beta must be nonnegative");
  const std::vector<Vector> pool = candidate_pool(posterior, space, seed);
  const double root_beta = std::sqrt(beta);

  auto lcb_score = [&](const Vector& x) {
    return -(posterior.mean_value(x) - root_beta * std::sqrt(std::max(posterior.variance(x), 0.0)));
  };
  auto pick = [&](auto&& score, const std::vector<Vector>& taken) {
    double best = -std::numeric_limits<double>::infinity();
    const Vector* arg = nullptr;
    for (const auto& x : pool) {
      if (std::find(taken.begin(), taken.end(), x) != taken.end()) continue;
      const double v = score(x);
      if (v > best) {
        best = v;
        arg = &x;
      }
    }
    require(arg != nullptr, "ucb_pe_select: candidate pool exhausted");
    Vector x = *arg;
    if (!space.is_finite()) {
      const Vector refined = pattern_search(space.box, x, best, score);
      if (std::find(taken.begin(), taken.end(), refined) == taken.end()) x = refined;
    }
    return x;
  };

  CandidateBatch batch;
  batch.points.push_back(pick(lcb_score, batch.points));
  for (Index slot = 1; slot < q; ++slot) {
    const GpPosterior conditioned = condition_on_pending(posterior, batch.points, model);
    auto variance_score = [&](const Vector& x) { return conditioned.variance(x); };
    batch.points.push_back(pick(variance_score, batch.points));
  }
  return batch;
}

}  // namespace dkg
