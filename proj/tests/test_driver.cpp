#include <doctest.h>

#include <cmath>

#include "dkg/bench.hpp"
#include "dkg/design.hpp"
#include "dkg/driver.hpp"
#include "dkg/linalg.hpp"

using namespace dkg;

namespace {

Objective bench_objective(const BenchmarkDef& b, double sigma) {
  return [&b, sigma](const EvaluationRequest& r) {
    if (r.direction) return EvaluationResult::success(evaluate_directional(b, r.x, *r.direction, NoiseSpec{sigma}, r.seed));
    return EvaluationResult::success(evaluate(b, r.x, NoiseSpec{sigma}, r.mask, r.seed));
  };
}

// Small, fast budgets so each step takes milliseconds.
ProblemSpec cheap_spec(const BenchmarkDef& b, FantasyMode mode, AcquisitionKind acq, Index q, int iterations) {
  ProblemSpec s;
  s.domain = b.domain;
  s.q = q;
  s.iterations = iterations;
  s.mode = mode;
  s.acquisition = acq;
  s.gradient_mask = b.default_mask;
  s.hyper_samples = 2;
  s.sampler.burn_in = 20;
  s.sampler.thin = 2;
  s.acquisition_options.outer.restarts = 2;
  s.acquisition_options.outer.sga_steps = 3;
  s.acquisition_options.outer.rerank_fantasies = 8;
  s.acquisition_options.inner.starts = 3;
  s.acquisition_options.inner.steps = 10;
  s.ei_fantasies = 64;
  s.record_timing = false;
  return s;
}

}  // namespace

TEST_CASE("observation bookkeeping per mode") {
  const auto& branin = find_benchmark("branin2");
  const auto& ros = find_benchmark("rosenbrock3");
  struct Case {
    const BenchmarkDef* bench;
    FantasyMode mode;
    AcquisitionKind acq;
    Index channels;
  };
  const std::vector<Case> cases{{&branin, FantasyMode::kDirectional, AcquisitionKind::kDkg, 2},
                                {&branin, FantasyMode::kFullGradient, AcquisitionKind::kDkg, 3},
                                {&ros, FantasyMode::kFullGradient, AcquisitionKind::kDkg, 2},
                                {&branin, FantasyMode::kValueOnly, AcquisitionKind::kKg, 1},
                                {&branin, FantasyMode::kValueOnly, AcquisitionKind::kEi, 1},
                                {&ros, FantasyMode::kFullGradient, AcquisitionKind::kDei, 2},
                                {&ros, FantasyMode::kFullGradient, AcquisitionKind::kUcbPe, 2}};
  for (const auto& c : cases) {
    CAPTURE(to_string(c.acq));
    CAPTURE(to_string(c.mode));
    BoDriver driver(cheap_spec(*c.bench, c.mode, c.acq, 2, 2), bench_objective(*c.bench, 0.5), 4);
    driver.initialize();
    CHECK(driver.initial_design().size() == static_cast<std::size_t>(2 * (c.bench->dim() + 1)));
    for (int t = 1; t <= 2; ++t) {
      const Index before = driver.eval_count();
      const IterationRecord rec = driver.step();
      CHECK(driver.eval_count() == before + 2);
      CHECK(rec.eval_count == 2 * t);
      REQUIRE(rec.observations.size() == 2);
      for (const auto& o : rec.observations) {
        CHECK(o.channel_count() == c.channels);
        CHECK(c.bench->domain.contains(o.location, 1e-12));
        if (c.mode == FantasyMode::kDirectional) CHECK(o.directional.has_value());
      }
      CHECK(c.bench->domain.contains(rec.recommendation, 1e-12));
    }
    CHECK(driver.done());
    CHECK_THROWS_AS(driver.step(), ContractViolation);
  }
}

TEST_CASE("invalid acquisition and mode combinations") {
  const auto& branin = find_benchmark("branin2");
  const auto& ros = find_benchmark("rosenbrock3");
  auto obj = bench_objective(branin, 0.5);
  CHECK_THROWS_AS(BoDriver(cheap_spec(branin, FantasyMode::kFullGradient, AcquisitionKind::kKg, 1, 1), obj, 1),
                  ContractViolation);
  CHECK_THROWS_AS(BoDriver(cheap_spec(branin, FantasyMode::kValueOnly, AcquisitionKind::kDei, 1, 1), obj, 1),
                  ContractViolation);
  CHECK_THROWS_AS(BoDriver(cheap_spec(ros, FantasyMode::kDirectional, AcquisitionKind::kDkg, 1, 1), obj, 1),
                  ContractViolation);
}

TEST_CASE("identical seeds give identical traces") {
  const auto& branin = find_benchmark("branin2");
  const ProblemSpec spec = cheap_spec(branin, FantasyMode::kDirectional, AcquisitionKind::kDkg, 2, 2);
  const RunTrace a = run(spec, bench_objective(branin, 0.5), 9, branin.value);
  const RunTrace b = run(spec, bench_objective(branin, 0.5), 9, branin.value);
  REQUIRE(a.complete);
  REQUIRE(a.iterations.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a.iterations[i].batch == b.iterations[i].batch);
    CHECK(a.iterations[i].recommendation == b.iterations[i].recommendation);
    CHECK(a.iterations[i].acquisition_value == b.iterations[i].acquisition_value);
    CHECK(a.iterations[i].hyper_digest == b.iterations[i].hyper_digest);
    CHECK(*a.iterations[i].direction == *b.iterations[i].direction);
  }
  const RunTrace c = run(spec, bench_objective(branin, 0.5), 10, branin.value);
  CHECK(c.iterations[0].batch != a.iterations[0].batch);
}

TEST_CASE("hyperparameter resampling keeps past records") {
  const auto& branin = find_benchmark("branin2");
  BoDriver driver(cheap_spec(branin, FantasyMode::kFullGradient, AcquisitionKind::kDkg, 1, 3),
                  bench_objective(branin, 0.5), 2);
  driver.initialize();
  const auto before = driver.raw_history();
  driver.step();
  driver.step();
  const auto& after = driver.raw_history();
  REQUIRE(after.size() == before.size() + 2);
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(after[i].location == before[i].location);
    CHECK(after[i].value == before[i].value);
  }
}

TEST_CASE("failed evaluations are retried once, then abort") {
  const auto& branin = find_benchmark("branin2");
  const ProblemSpec spec = cheap_spec(branin, FantasyMode::kValueOnly, AcquisitionKind::kKg, 1, 2);
  int calls = 0;
  Objective flaky = [&](const EvaluationRequest& r) {
    ++calls;
    if (calls == 7) return EvaluationResult::failure("transient");
    return EvaluationResult::success(evaluate(branin, r.x, NoiseSpec{0.5}, {}, r.seed));
  };
  const RunTrace ok = run(spec, flaky, 3);
  CHECK(ok.complete);
  CHECK(ok.iterations[0].evaluation_errors == std::vector<std::string>{"transient"});

  int n = 0;
  Objective broken = [&](const EvaluationRequest& r) {
    if (++n > 6) return EvaluationResult::failure("down");
    return EvaluationResult::success(evaluate(branin, r.x, NoiseSpec{0.5}, {}, r.seed));
  };
  const RunTrace bad = run(spec, broken, 3);
  CHECK_FALSE(bad.complete);
  CHECK(bad.iterations.empty());
  CHECK(bad.failure.find("down") != std::string::npos);
}

TEST_CASE("recommendation") {
  const KernelSpec k = KernelSpec::isotropic(1, 1.0, 0.15, 1e-8);
  SUBCASE("noise-free history containing the minimizer") {
    std::vector<ObservationRecord> h;
    for (double x : {0.0, 0.2, 0.4, 0.55, 0.6, 0.65, 0.8, 1.0}) {
      h.push_back(ObservationRecord::value_only(Vector::Constant(1, x), (x - 0.6) * (x - 0.6)));
    }
    const std::vector<GpPosterior> ps{GpPosterior(0.0, k, h)};
    const Vector r = minimize_average_mean(ps, SearchSpace(Box::unit(1)), InnerOptions{}, 1);
    CHECK(std::abs(r[0] - 0.6) < 1e-2);
  }
  SUBCASE("dense grid oracle for averaged means") {
    std::vector<ObservationRecord> h;
    Rng rng(4);
    for (int i = 0; i < 6; ++i) h.push_back(ObservationRecord::value_only(Vector::Constant(1, (i + 0.3) / 6.0), standard_normal(rng, 1)[0]));
    const std::vector<GpPosterior> ps{GpPosterior(0.0, k, h), GpPosterior(0.2, KernelSpec::isotropic(1, 2.0, 0.25, 0.01), h)};
    const Vector r = minimize_average_mean(ps, SearchSpace(Box::unit(1)), InnerOptions{}, 1);
    auto avg = [&](double x) {
      return 0.5 * (ps[0].mean_value(Vector::Constant(1, x)) + ps[1].mean_value(Vector::Constant(1, x)));
    };
    double grid_min = 1e300;
    for (int i = 0; i < 10000; ++i) grid_min = std::min(grid_min, avg(i / 9999.0));
    CHECK(avg(r[0]) <= grid_min + 1e-3);
  }
  SUBCASE("empty history") {
    const std::vector<GpPosterior> ps{GpPosterior(0.3, k, {})};
    const Vector r = minimize_average_mean(ps, SearchSpace(Box::unit(1)), InnerOptions{}, 1);
    CHECK(Box::unit(1).contains(r));
    CHECK(ps[0].mean_value(r) == doctest::Approx(0.3));
  }
}

TEST_CASE("noise-free regret of the running best recommendation never increases") {
  const auto& branin = find_benchmark("branin2");
  const RunTrace t = run(cheap_spec(branin, FantasyMode::kFullGradient, AcquisitionKind::kDkg, 2, 4),
                         bench_objective(branin, 0.0), 5, branin.value);
  REQUIRE(t.complete);
  double best = 1e300;
  for (const auto& it : t.iterations) {
    REQUIRE(it.recommendation_value);
    const double next = std::min(best, *it.recommendation_value);
    CHECK(next <= best);
    best = next;
  }
}

TEST_CASE("model scaling maps directional observations consistently") {
  ModelScaling s;
  s.domain = Box((Vector(2) << -5.0, 0.0).finished(), (Vector(2) << 15.0, 15.0).finished());
  s.shift = 3.0;
  s.scale = 2.0;
  const Vector grad = (Vector(2) << 1.5, -0.5).finished();
  const Vector theta_model = (Vector(2) << 0.6, 0.8).finished();
  const Vector phi = theta_model.cwiseProduct(s.domain.width()).normalized();
  ObservationRecord raw = ObservationRecord::value_only((Vector(2) << 1.0, 2.0).finished(), 7.0);
  raw.directional = DirectionalObservation{phi, phi.dot(grad)};
  const ObservationRecord m = s.to_model(raw);
  CHECK(*m.value == doctest::Approx(2.0));
  CHECK((m.directional->direction - theta_model).norm() < 1e-12);
  // d/du of (f(lo + w u) - shift) / scale along theta.
  const Vector model_grad = grad.cwiseProduct(s.domain.width()) / s.scale;
  CHECK(m.directional->value == doctest::Approx(theta_model.dot(model_grad)));
}
