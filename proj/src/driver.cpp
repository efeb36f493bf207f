#include "dkg/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "dkg/design.hpp"

namespace dkg {

std::string to_string(AcquisitionKind kind) {
  switch (kind) {
    case AcquisitionKind::kDkg:
      return "dkg";
    case AcquisitionKind::kKg:
      return "kg";
    case AcquisitionKind::kEi:
      return "ei";
    case AcquisitionKind::kDei:
      return "dei";
    case AcquisitionKind::kUcbPe:
      return "ucbpe";
  }
  return "?";
}

std::string to_string(FantasyMode mode) {
  switch (mode) {
    case FantasyMode::kDirectional:
      return "directional";
    case FantasyMode::kFullGradient:
      return "full-gradient";
    case FantasyMode::kValueOnly:
      return "value-only";
  }
  return "?";
}

void ProblemSpec::validate() const {
  const Index d = domain.dim();
  require(d >= 1, "ProblemSpec: empty domain");
  require(q >= 1, "ProblemSpec: batch size must be at least 1");
  require(iterations >= 1, "ProblemSpec: need at least one iteration");
  require(gradient_mask.empty() || static_cast<Index>(gradient_mask.size()) == d,
          "ProblemSpec: gradient mask length must equal the dimension");
  require(hyper_samples >= 1, "ProblemSpec: need at least one hyperparameter sample");
  const bool all_partials =
      gradient_mask.empty() || std::all_of(gradient_mask.begin(), gradient_mask.end(), [](bool b) { return b; });
  const bool any_partial =
      gradient_mask.empty() || std::any_of(gradient_mask.begin(), gradient_mask.end(), [](bool b) { return b; });
  if (mode == FantasyMode::kDirectional) {
    require(all_partials, "ProblemSpec: directional mode needs the full gradient to be observable");
  }
  if (mode == FantasyMode::kFullGradient) require(any_partial, "ProblemSpec: full-gradient mode needs an observable partial");
  switch (acquisition) {
    case AcquisitionKind::kDkg:
      require(mode != FantasyMode::kValueOnly, "ProblemSpec: dkg needs derivative observations");
      break;
    case AcquisitionKind::kKg:
    case AcquisitionKind::kEi:
      require(mode == FantasyMode::kValueOnly, "ProblemSpec: kg and ei use value-only observations");
      break;
    case AcquisitionKind::kDei:
      require(mode == FantasyMode::kFullGradient, "ProblemSpec: dei needs full-gradient (possibly masked) mode");
      break;
    case AcquisitionKind::kUcbPe:
      require(mode != FantasyMode::kDirectional, "ProblemSpec: ucbpe supports value-only or full-gradient mode");
      break;
  }
  for (const auto& x : finite_domain) {
    require(x.size() == d && domain.contains(x, 1e-12), "ProblemSpec: finite domain point outside the box");
  }
  if (fixed_hyper) {
    require(fixed_hyper->kernel.dim() == d, "ProblemSpec: fixed hyperparameters have the wrong dimension");
    fixed_hyper->kernel.validate();
  }
  require(ucb_delta > 0.0 && ucb_delta < 1.0, "ProblemSpec: ucb_delta must lie in (0, 1)");
}

ObservationModel ProblemSpec::observation_model() const {
  switch (mode) {
    case FantasyMode::kDirectional:
      return ObservationModel::directional();
    case FantasyMode::kFullGradient:
      return ObservationModel::full_gradient(gradient_mask);
    case FantasyMode::kValueOnly:
      return ObservationModel::value_only();
  }
  return ObservationModel::value_only();
}

ObservationRecord ModelScaling::to_model(const ObservationRecord& raw) const {
  const Vector w = domain.width();
  ObservationRecord rec;
  rec.location = domain.project(raw.location);
  rec.location = to_model(rec.location).cwiseMax(0.0).cwiseMin(1.0);
  if (raw.value) rec.value = (*raw.value - shift) / scale;
  if (!raw.partials.empty()) {
    rec.partials.resize(raw.partials.size());
    for (std::size_t i = 0; i < raw.partials.size(); ++i) {
      if (raw.partials[i]) rec.partials[i] = *raw.partials[i] * w[static_cast<Index>(i)] / scale;
    }
  }
  if (raw.directional) {
    // Raw direction phi; the model sees theta = normalize(phi / w) and the
    // derivative rescaled by |theta * w| = 1 / |phi / w|.
    const Vector ratio = raw.directional->direction.cwiseQuotient(w);
    const double norm = ratio.norm();
    rec.directional = DirectionalObservation{ratio / norm, raw.directional->value / (norm * scale)};
  }
  return rec;
}

// ---------------------------------------------------------------------------

BoDriver::BoDriver(ProblemSpec spec, Objective objective, std::uint64_t seed, std::function<double(const Vector&)> truth)
    : spec_(std::move(spec)), objective_(std::move(objective)), seed_(seed), truth_(std::move(truth)) {
  spec_.validate();
  require(static_cast<bool>(objective_), "BoDriver: missing objective");
  if (spec_.gradient_mask.empty()) spec_.gradient_mask.assign(static_cast<std::size_t>(spec_.domain.dim()), true);
  scaling_.domain = spec_.domain;
}

SearchSpace BoDriver::model_space() const {
  const Index d = spec_.domain.dim();
  if (spec_.finite_domain.empty()) return SearchSpace(Box::unit(d));
  std::vector<Vector> pts;
  for (const auto& x : spec_.finite_domain) pts.push_back(scaling_.to_model(x).cwiseMax(0.0).cwiseMin(1.0));
  return SearchSpace(Box::unit(d), std::move(pts));
}

std::vector<ObservationRecord> BoDriver::evaluate_batch(const std::vector<Vector>& model_points,
                                                        const std::optional<Vector>& model_direction, int tag,
                                                        std::vector<std::string>* errors) {
  const Index d = spec_.domain.dim();
  const Vector w = spec_.domain.width();
  std::vector<ObservationRecord> out;
  for (std::size_t i = 0; i < model_points.size(); ++i) {
    EvaluationRequest request;
    request.x = spec_.domain.project(scaling_.to_raw(model_points[i]));
    if (spec_.mode == FantasyMode::kDirectional) {
      require(model_direction.has_value(), "BoDriver: directional mode needs a direction");
      request.direction = model_direction->cwiseProduct(w).normalized();
    } else if (spec_.mode == FantasyMode::kFullGradient) {
      request.mask = spec_.gradient_mask;
    }
    bool done = false;
    for (std::uint64_t attempt = 0; attempt < 2 && !done; ++attempt) {
      request.seed = derive_seed(seed_, Stream::kNoise, static_cast<std::uint64_t>(tag), 2 * i + attempt);
      std::string error;
      try {
        EvaluationResult result = objective_(request);
        if (result.record) {
          ObservationRecord rec = std::move(*result.record);
          rec.location = request.x;
          rec.validate(d, &spec_.domain);
          out.push_back(std::move(rec));
          done = true;
        } else {
          error = result.error.empty() ? "objective reported a failure" : result.error;
        }
      } catch (const std::exception& e) {
        error = e.what();
      }
      if (!done && errors != nullptr) errors->push_back(error);
      if (!done && attempt == 1) throw EvaluationFailure("evaluation failed twice: " + error);
    }
  }
  return out;
}

void BoDriver::initialize() {
  if (initialized_) return;
  const Index d = spec_.domain.dim();
  const int n0 = spec_.initial_design < 0 ? static_cast<int>(2 * (d + 1)) : spec_.initial_design;
  Rng rng = make_rng(seed_, Stream::kDesign);
  std::vector<Vector> model_points;
  if (!spec_.finite_domain.empty()) {
    const SearchSpace space = model_space();
    std::vector<std::size_t> order(space.finite.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (int i = 0; i < n0 && static_cast<std::size_t>(i) < order.size(); ++i) model_points.push_back(space.finite[order[static_cast<std::size_t>(i)]]);
  } else if (n0 > 0) {
    model_points = shifted_halton(Box::unit(d), n0, rng);
  }
  std::optional<Vector> direction;
  std::vector<ObservationRecord> raw;
  for (std::size_t i = 0; i < model_points.size(); ++i) {
    if (spec_.mode == FantasyMode::kDirectional) {
      Rng drng = make_rng(seed_, Stream::kDirection, i);
      direction = random_direction(drng, d);
    }
    auto recs = evaluate_batch({model_points[i]}, direction, 0, nullptr);
    raw.push_back(std::move(recs.front()));
  }

  if (spec_.standardize && !raw.empty()) {
    double mean = 0.0;
    int n = 0;
    for (const auto& r : raw) {
      if (r.value) {
        mean += *r.value;
        ++n;
      }
    }
    if (n > 0) {
      mean /= n;
      double var = 0.0;
      for (const auto& r : raw) {
        if (r.value) var += (*r.value - mean) * (*r.value - mean);
      }
      const double sd = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
      scaling_.shift = mean;
      scaling_.scale = sd > 1e-12 ? sd : 1.0;
    }
  }
  for (auto& r : raw) {
    model_history_.push_back(scaling_.to_model(r));
    raw_history_.push_back(r);
  }
  initial_records_ = raw_history_;
  initialized_ = true;
}

void BoDriver::refresh_hyper(bool resample) {
  const Index d = spec_.domain.dim();
  if (spec_.fixed_hyper) {
    samples_ = {HyperSample{spec_.fixed_hyper->kernel, spec_.fixed_hyper->prior_mean, 0.0}};
  } else if (resample || samples_.empty()) {
    SamplerOptions options = spec_.sampler;
    options.samples = spec_.hyper_samples;
    const auto result = sample_hyperparameters(model_history_, d, options,
                                               derive_seed(seed_, Stream::kHyper, static_cast<std::uint64_t>(iteration_)),
                                               walkers_.size() > 0 ? &walkers_ : nullptr);
    samples_ = result.samples;
    walkers_ = result.final_walkers;
  }
  posteriors_.clear();
  std::string last_error;
  for (const auto& s : samples_) {
    try {
      posteriors_.emplace_back(s.hyper(), model_history_);
    } catch (const SingularModelError& e) {
      last_error = e.what();
    }
  }
  if (posteriors_.empty()) throw SingularModelError("every hyperparameter sample is singular: " + last_error, -1);
}

std::string BoDriver::hyper_digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& s : samples_) {
    const Vector p = encode_hyper(s.hyper());
    for (Index i = 0; i < p.size(); ++i) {
      unsigned char bytes[sizeof(double)];
      const double v = p[i];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

IterationRecord BoDriver::step() {
  initialize();
  require(!done(), "BoDriver::step: budget exhausted");
  const auto start = std::chrono::steady_clock::now();
  ++iteration_;
  const int t = iteration_;
  refresh_hyper(t <= 5 || t % 5 == 0);

  const SearchSpace space = model_space();
  const std::uint64_t iter_seed = derive_seed(seed_, Stream::kFantasy, static_cast<std::uint64_t>(t));
  const ObservationModel model = spec_.observation_model();
  IterationRecord rec;
  rec.iteration = t;
  CandidateBatch batch;
  switch (spec_.acquisition) {
    case AcquisitionKind::kDkg: {
      AcquisitionOptions options = spec_.acquisition_options;
      options.model = model;
      const OuterResult r = outer_maximize(posteriors_, space, spec_.q, options, iter_seed);
      batch = r.batch;
      rec.acquisition_value = r.value.value;
      break;
    }
    case AcquisitionKind::kKg: {
      const OuterResult r = kg_maximize(posteriors_, space, spec_.q, spec_.acquisition_options, iter_seed);
      batch = r.batch;
      rec.acquisition_value = r.value.value;
      break;
    }
    case AcquisitionKind::kEi:
    case AcquisitionKind::kDei: {
      const OuterResult r = ei_maximize(posteriors_, space, spec_.q, spec_.ei_fantasies, iter_seed);
      batch = r.batch;
      rec.acquisition_value = r.value.value;
      break;
    }
    case AcquisitionKind::kUcbPe: {
      std::size_t best = 0;
      for (std::size_t j = 1; j < samples_.size() && j < posteriors_.size(); ++j) {
        if (samples_[j].log_posterior > samples_[best].log_posterior) best = j;
      }
      const GpPosterior& p = posteriors_[best];
      const double d = static_cast<double>(spec_.domain.dim());
      const double beta = 2.0 * std::log(d * t * t * std::numbers::pi * std::numbers::pi / (6.0 * spec_.ucb_delta));
      batch = ucb_pe_select(p, space, spec_.q, beta, model, iter_seed);
      const Vector& z = batch.points.front();
      rec.acquisition_value = -(p.mean_value(z) - std::sqrt(beta) * std::sqrt(std::max(p.variance(z), 0.0)));
      break;
    }
  }
  if (spec_.mode == FantasyMode::kDirectional && !batch.direction) {
    Rng drng = make_rng(seed_, Stream::kDirection, static_cast<std::uint64_t>(t), 1);
    batch.direction = random_direction(drng, spec_.domain.dim());
  }

  try {
    rec.observations = evaluate_batch(batch.points, batch.direction, t, &rec.evaluation_errors);
  } catch (...) {
    --iteration_;
    throw;
  }
  for (const auto& z : batch.points) rec.batch.push_back(spec_.domain.project(scaling_.to_raw(z)));
  if (batch.direction) rec.direction = batch.direction->cwiseProduct(spec_.domain.width()).normalized();
  for (const auto& o : rec.observations) {
    raw_history_.push_back(o);
    model_history_.push_back(scaling_.to_model(o));
  }
  refresh_hyper(false);
  rec.eval_count = eval_count();
  rec.recommendation = recommend();
  if (truth_) rec.recommendation_value = truth_(rec.recommendation);
  rec.hyper_digest = hyper_digest();
  if (spec_.record_timing) {
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return rec;
}

Vector BoDriver::recommend() const {
  const SearchSpace space = model_space();
  if (posteriors_.empty()) {
    if (space.is_finite()) return scaling_.to_raw(space.finite.front());
    return spec_.domain.from_unit(Vector::Constant(spec_.domain.dim(), 0.5));
  }
  const Vector u = minimize_average_mean(posteriors_, space, spec_.acquisition_options.inner,
                                         derive_seed(seed_, Stream::kInnerStarts, static_cast<std::uint64_t>(iteration_)));
  if (space.is_finite()) {
    for (std::size_t i = 0; i < space.finite.size(); ++i) {
      if (space.finite[i] == u) return spec_.finite_domain[i];
    }
  }
  return spec_.domain.project(scaling_.to_raw(u));
}

Vector minimize_average_mean(std::span<const GpPosterior> posteriors, const SearchSpace& space,
                             const InnerOptions& options, std::uint64_t seed) {
  require(!posteriors.empty(), "minimize_average_mean: need at least one posterior");
  std::vector<KernelExpansion> means;
  for (const auto& p : posteriors) {
    means.emplace_back(p.kernel(), p.channel_points(), p.channel_functionals_t(),
                       p.channel_count() > 0 ? p.weights() : Vector(), p.prior_mean());
  }
  const double m = static_cast<double>(means.size());
  const SmoothObjective average = [&](const Vector& x, Vector* gradient) {
    double v = 0.0;
    Vector g;
    if (gradient != nullptr) gradient->setZero(x.size());
    for (const auto& e : means) {
      v += e.value(x, gradient != nullptr ? &g : nullptr);
      if (gradient != nullptr) *gradient += g;
    }
    if (gradient != nullptr) *gradient /= m;
    return v / m;
  };

  if (space.is_finite()) {
    Index best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < space.finite.size(); ++i) {
      const double v = average(space.finite[i], nullptr);
      if (v < best_value) {
        best_value = v;
        best = static_cast<Index>(i);
      }
    }
    return space.finite[static_cast<std::size_t>(best)];
  }

  const Box& box = space.box;
  const Index d = box.dim();
  Rng rng = make_rng(seed, Stream::kInnerStarts);
  std::vector<Vector> starts = latin_hypercube(box, std::max(options.starts - 1, 1), rng);
  double best_seen = std::numeric_limits<double>::infinity();
  Vector best_loc;
  for (const auto& rec : posteriors[0].history()) {
    if (!box.contains(rec.location, 1e-12)) continue;
    const double v = average(rec.location, nullptr);
    if (v < best_seen) {
      best_seen = v;
      best_loc = rec.location;
    }
  }
  if (best_loc.size() > 0) starts.push_back(best_loc);
  if (d <= 2) {
    const Index per_axis = d == 1 ? 1001 : 101;
    Vector best_grid;
    double best_grid_value = std::numeric_limits<double>::infinity();
    Vector x(d);
    const Index total = d == 1 ? per_axis : per_axis * per_axis;
    for (Index k = 0; k < total; ++k) {
      Index rem = k;
      for (Index i = 0; i < d; ++i) {
        x[i] = box.lower[i] + box.width()[i] * static_cast<double>(rem % per_axis) / static_cast<double>(per_axis - 1);
        rem /= per_axis;
      }
      const double v = average(x, nullptr);
      if (v < best_grid_value) {
        best_grid_value = v;
        best_grid = x;
      }
    }
    starts.push_back(best_grid);
  }
  return inner_minimize(average, space, starts, options).x;
}

RunTrace run(const ProblemSpec& spec, const Objective& objective, std::uint64_t seed,
             std::function<double(const Vector&)> truth) {
  RunTrace trace;
  BoDriver driver(spec, objective, seed, std::move(truth));
  try {
    driver.initialize();
    trace.initial_design = driver.initial_design();
    while (!driver.done()) trace.iterations.push_back(driver.step());
    trace.complete = true;
  } catch (const EvaluationFailure& e) {
    trace.failure = e.what();
  } catch (const SingularModelError& e) {
    trace.failure = e.what();
  }
  if (trace.initial_design.empty()) trace.initial_design = driver.initial_design();
  return trace;
}

}  // namespace dkg
