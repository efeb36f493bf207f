#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dkg/hyper.hpp"
#include "helpers.hpp"

using namespace dkg;

namespace {

std::vector<ObservationRecord> sinusoid_history(int n, bool gradients) {
  std::vector<ObservationRecord> h;
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n;
    const double y = std::sin(6.0 * x);
    if (gradients) {
      h.push_back(ObservationRecord::full(Vector::Constant(1, x), y, Vector::Constant(1, 6.0 * std::cos(6.0 * x))));
    } else {
      h.push_back(ObservationRecord::value_only(Vector::Constant(1, x), y));
    }
  }
  return h;
}

struct Moments {
  Vector mean;
  Matrix cov;
};

Moments moments(const std::vector<Vector>& xs) {
  const Index d = xs.front().size();
  Moments m{Vector::Zero(d), Matrix::Zero(d, d)};
  for (const auto& x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (const auto& x : xs) m.cov += (x - m.mean) * (x - m.mean).transpose();
  m.cov /= static_cast<double>(xs.size() - 1);
  return m;
}

}  // namespace

TEST_CASE("scalar marginal likelihood") {
  const double alpha = 1.7, noise = 0.3, y = 0.9;
  const HyperParameters h{KernelSpec(alpha, Vector::Constant(1, 0.5), Vector::Constant(2, noise)), 0.0};
  const double want = -0.5 * y * y / (alpha + noise) - 0.5 * std::log(2.0 * std::numbers::pi * (alpha + noise));
  CHECK(log_marginal_likelihood(h, {ObservationRecord::value_only(Vector::Constant(1, 0.2), y)}) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("marginal likelihood is exchangeable") {
  std::mt19937_64 rng(51);
  std::vector<ObservationRecord> h;
  for (int i = 0; i < 6; ++i) h.push_back(testing_support::random_record(rng, 2));
  const HyperParameters hp{testing_support::random_kernel(rng, 2), 0.3};
  const double a = log_marginal_likelihood(hp, h);
  std::shuffle(h.begin(), h.end(), rng);
  CHECK(std::abs(log_marginal_likelihood(hp, h) - a) <= 1e-9);
}

TEST_CASE("length-scale gradient of the marginal likelihood") {
  std::mt19937_64 rng(52);
  for (int t = 0; t < 6; ++t) {
    const Index d = 1 + t % 3;
    std::vector<ObservationRecord> h;
    for (int i = 0; i < 5; ++i) h.push_back(testing_support::random_record(rng, d));
    HyperParameters hp{testing_support::random_kernel(rng, d), 0.1};
    const Vector g = lml_gradient_log_lengths(hp, h);
    for (Index m = 0; m < d; ++m) {
      const double eps = 1e-5;
      HyperParameters up = hp, down = hp;
      up.kernel.length_scales[m] *= std::exp(eps);
      down.kernel.length_scales[m] *= std::exp(-eps);
      const double fd = (log_marginal_likelihood(up, h) - log_marginal_likelihood(down, h)) / (2.0 * eps);
      CHECK(g[m] == doctest::Approx(fd).epsilon(1e-3).scale(1e-6));
    }
  }
}

TEST_CASE("inflating the noise beyond the data scale lowers the likelihood") {
  const auto h = sinusoid_history(8, false);
  double previous = std::numeric_limits<double>::infinity();
  for (double noise : {0.01, 0.1, 1.0, 10.0}) {
    const HyperParameters hp{KernelSpec(1.0, Vector::Constant(1, 0.25), Vector::Constant(2, noise)), 0.0};
    const double lml = log_marginal_likelihood(hp, h);
    CHECK(lml < previous);
    previous = lml;
  }
}

TEST_CASE("parameter encoding round trip") {
  const HyperParameters hp{KernelSpec(1.3, Vector::Constant(3, 0.4), (Vector(4) << 0.05, 0.2, 0.2, 0.2).finished()), -0.7};
  const HyperParameters back = decode_hyper(encode_hyper(hp), 3);
  CHECK(back.kernel.signal_variance == doctest::Approx(1.3));
  CHECK((back.kernel.noise_variances - hp.kernel.noise_variances).norm() < 1e-12);
  CHECK(back.prior_mean == -0.7);
}

TEST_CASE("stretch-move sampler recovers a correlated Gaussian") {
  Vector mu(2);
  mu << 2.0, -3.0;
  Matrix cov(2, 2);
  cov << 1.0, 0.8, 0.8, 2.0;
  const Matrix prec = cov.inverse();
  const EnsembleSampler sampler([&](const Vector& x) { return -0.5 * (x - mu).dot(prec * (x - mu)); });
  Rng rng = make_rng(7, Stream::kHyper);
  std::normal_distribution<double> gauss;
  Matrix init(2, 32);
  for (Index k = 0; k < 32; ++k) init.col(k) << gauss(rng), gauss(rng);
  const auto result = sampler.run(init, 500, 320, 20, rng);
  std::vector<Vector> xs;
  for (const auto& snap : result.snapshots) {
    for (Index k = 0; k < snap.cols(); ++k) xs.push_back(snap.col(k));
  }
  CHECK(xs.size() >= 10000);
  const Moments m = moments(xs);
  for (Index i = 0; i < 2; ++i) CHECK(std::abs(m.mean[i] - mu[i]) <= 0.05 * std::abs(mu[i]));
  for (Index i = 0; i < 2; ++i) {
    for (Index j = 0; j < 2; ++j) CHECK(std::abs(m.cov(i, j) - cov(i, j)) <= 0.05 * std::sqrt(cov(i, i) * cov(j, j)));
  }
  CHECK(result.acceptance_rate > 0.1);
  CHECK(result.acceptance_rate < 0.9);
}

TEST_CASE("sampler rejects a start with no support") {
  const EnsembleSampler sampler([](const Vector&) { return -std::numeric_limits<double>::infinity(); });
  Rng rng(1);
  CHECK_THROWS(sampler.run(Matrix::Zero(2, 8), 1, 1, 1, rng));
}

TEST_CASE("hyperparameter samples") {
  const auto h = sinusoid_history(6, true);
  SamplerOptions options;
  options.burn_in = 100;
  const auto a = sample_hyperparameters(h, 1, options, 3);
  const auto b = sample_hyperparameters(h, 1, options, 3);
  REQUIRE(a.samples.size() == 10);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].log_posterior == b.samples[i].log_posterior);
    CHECK(std::isfinite(a.samples[i].log_posterior));
    CHECK_NOTHROW(a.samples[i].kernel.validate());
  }
  CHECK(a.final_walkers.cols() == 20);

  options.samples = 1;
  const auto best = sample_hyperparameters(h, 1, options, 3);
  REQUIRE(best.samples.size() == 1);
  // With m=1 the only retained ensemble is the final one; the pick is its best walker.
  double top = -std::numeric_limits<double>::infinity();
  for (Index k = 0; k < best.final_walkers.cols(); ++k) {
    const Vector params = best.final_walkers.col(k);
    top = std::max(top, log_marginal_likelihood(decode_hyper(params, 1), h) + log_prior(params, 1, options.prior));
  }
  CHECK(best.samples[0].log_posterior == doctest::Approx(top).epsilon(1e-12));

  options.walkers = 4;
  CHECK_THROWS_AS(sample_hyperparameters(h, 1, options, 3), ContractViolation);
}
