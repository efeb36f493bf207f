#include <doctest.h>

#include <cmath>

#include "dkg/bench.hpp"

using namespace dkg;

TEST_CASE("registry contents") {
  const auto names = benchmark_names();
  CHECK(names == std::vector<std::string>{"branin2", "rosenbrock3", "ackley5", "levy4", "hartmann6", "cosine8"});
  CHECK(find_benchmark("branin2").default_q == 4);
  CHECK(find_benchmark("rosenbrock3").default_q == 4);
  CHECK(find_benchmark("ackley5").default_q == 4);
  CHECK(find_benchmark("levy4").default_q == 8);
  CHECK(find_benchmark("hartmann6").default_q == 8);
  CHECK(find_benchmark("cosine8").default_q == 8);
  CHECK(find_benchmark("rosenbrock3").default_mask == std::vector<bool>{false, false, true});
  CHECK(find_benchmark("levy4").default_mask == std::vector<bool>{false, false, false, true});
  CHECK(find_benchmark("cosine8").default_mask == std::vector<bool>{true, true, false, false, false, false, false, false});
  CHECK(find_benchmark("hartmann6").default_mask == std::vector<bool>(6, true));
  CHECK_THROWS_AS(find_benchmark("sphere"), ContractViolation);
}

TEST_CASE("every benchmark passes the gradient and minimum audits") {
  for (const auto& def : benchmark_registry()) {
    CAPTURE(def.name);
    const GradientAudit audit = audit_gradient(def, 100, 1e-6, 1e-5, 99);
    CHECK(audit.passed);
    for (const auto& x : def.minimizers) {
      CHECK(std::abs(def.value(x) - def.min_value) <= 1e-6);
      CHECK(immediate_regret(def, x).regret <= 1e-6);
    }
  }
}

TEST_CASE("noise-free values at known points") {
  const NoiseSpec none{0.0};
  const auto& ros = find_benchmark("rosenbrock3");
  const auto r = evaluate(ros, Vector::Ones(3), none, ros.default_mask, 1);
  CHECK(*r.value == 0.0);
  REQUIRE(r.partials.size() == 3);
  CHECK(!r.partials[0]);
  CHECK(!r.partials[1]);
  CHECK(*r.partials[2] == 0.0);

  const auto& ack = find_benchmark("ackley5");
  const auto a = evaluate(ack, Vector::Zero(5), none, ack.default_mask, 1);
  CHECK(std::abs(*a.value) < 1e-12);
  for (const auto& p : a.partials) CHECK(std::abs(*p) < 1e-12);

  const auto& bra = find_benchmark("branin2");
  const auto b = evaluate(bra, (Vector(2) << M_PI, 2.275).finished(), none, {}, 1);
  CHECK(std::abs(*b.value - 0.397887) < 1e-4);
  CHECK(b.partials.empty());

  const auto& hart = find_benchmark("hartmann6");
  CHECK(std::abs(hart.value(hart.minimizers[0]) + 3.32237) < 1e-5);
  CHECK(immediate_regret(hart, hart.minimizers[0]).regret <= 1e-4);
}

TEST_CASE("noisy evaluations are seeded and centred") {
  const auto& bra = find_benchmark("branin2");
  const Vector x = (Vector(2) << 1.0, 4.0).finished();
  const auto a = evaluate(bra, x, NoiseSpec{0.5}, bra.default_mask, 8);
  const auto b = evaluate(bra, x, NoiseSpec{0.5}, bra.default_mask, 8);
  CHECK(*a.value == *b.value);
  CHECK(*a.partials[1] == *b.partials[1]);
  double sum = 0.0, sq = 0.0;
  const int n = 4000;
  for (int s = 0; s < n; ++s) {
    const double e = *evaluate(bra, x, NoiseSpec{0.5}, {}, s).value - bra.value(x);
    sum += e;
    sq += e * e;
  }
  CHECK(std::abs(sum / n) < 4.0 * 0.5 / std::sqrt(n));
  CHECK(std::sqrt(sq / n) == doctest::Approx(0.5).epsilon(0.05));

  const Vector theta = (Vector(2) << 0.6, 0.8).finished();
  const auto d = evaluate_directional(bra, x, theta, NoiseSpec{0.0}, 3);
  CHECK(d.directional->value == doctest::Approx(theta.dot(bra.gradient(x))));
  CHECK(d.channel_count() == 2);
  CHECK_THROWS_AS(evaluate(bra, (Vector(2) << 20.0, 1.0).finished(), NoiseSpec{}, {}, 1), ContractViolation);
}

TEST_CASE("regret ignores the noise seed and is clipped") {
  const auto& cos8 = find_benchmark("cosine8");
  const Vector x = Vector::Constant(8, 0.3);
  const Regret r = immediate_regret(cos8, x);
  CHECK(r.regret == doctest::Approx(cos8.value(x) + 0.8));
  CHECK(r.log10_regret == doctest::Approx(std::log10(r.regret)));
  CHECK(immediate_regret(cos8, Vector::Zero(8)).log10_regret == doctest::Approx(-12.0));
}

TEST_CASE("one-dimensional illustration") {
  Figure1Options options;
  options.grid_size = 41;
  options.fantasies = 64;
  const Figure1Data data = figure1_scenario(5, options);
  CHECK(data.grid.size() == 41);
  CHECK(data.kg.size() == 41);
  CHECK(data.dkg.size() == 41);
  CHECK(data.ei.size() == 41);
  CHECK(data.after_dkg.mean.size() == 41);
  for (Index i = 0; i < 41; ++i) {
    CHECK(data.with_gradients.sd[i] * data.with_gradients.sd[i] <=
          data.without_gradients.sd[i] * data.without_gradients.sd[i] + 1e-10);
    CHECK(data.kg[i] >= -3.0 * data.kg_se[i]);
    CHECK(data.dkg[i] >= -3.0 * data.dkg_se[i]);
    CHECK(data.ei[i] >= 0.0);
  }
  CHECK(data.history_x.size() == 4);
}
