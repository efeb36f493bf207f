#include "dkg/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dkg/acquisition.hpp"
#include "dkg/design.hpp"
#include "dkg/linalg.hpp"
#include "dkg/posterior.hpp"

namespace dkg {

namespace {

constexpr double kPi = std::numbers::pi;

Vector constant(Index d, double v) { return Vector::Constant(d, v); }

BenchmarkDef branin() {
  const double b = 5.1 / (4.0 * kPi * kPi), c = 5.0 / kPi, r = 6.0, s = 10.0, t = 1.0 / (8.0 * kPi);
  BenchmarkDef def;
  def.name = "branin2";
  def.domain = Box((Vector(2) << -5.0, 0.0).finished(), (Vector(2) << 15.0, 15.0).finished());
  def.value = [=](const Vector& x) {
    const double u = x[1] - b * x[0] * x[0] + c * x[0] - r;
    return u * u + s * (1.0 - t) * std::cos(x[0]) + s;
  };
  def.gradient = [=](const Vector& x) {
    const double u = x[1] - b * x[0] * x[0] + c * x[0] - r;
    Vector g(2);
    g[0] = 2.0 * u * (c - 2.0 * b * x[0]) - s * (1.0 - t) * std::sin(x[0]);
    g[1] = 2.0 * u;
    return g;
  };
  def.min_value = 5.0 / (4.0 * kPi);
  def.minimizers = {(Vector(2) << -kPi, 12.275).finished(), (Vector(2) << kPi, 2.275).finished(),
                    (Vector(2) << 3.0 * kPi, 2.475).finished()};
  def.default_mask = {true, true};
  def.default_q = 4;
  return def;
}

BenchmarkDef rosenbrock() {
  BenchmarkDef def;
  def.name = "rosenbrock3";
  def.domain = Box(constant(3, -2.0), constant(3, 2.0));
  def.value = [](const Vector& x) {
    double f = 0.0;
    for (Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      f += 100.0 * a * a + (1.0 - x[i]) * (1.0 - x[i]);
    }
    return f;
  };
  def.gradient = [](const Vector& x) {
    Vector g = Vector::Zero(x.size());
    for (Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      g[i] += -400.0 * a * x[i] - 2.0 * (1.0 - x[i]);
      g[i + 1] += 200.0 * a;
    }
    return g;
  };
  def.min_value = 0.0;
  def.minimizers = {constant(3, 1.0)};
  def.default_mask = {false, false, true};
  def.default_q = 4;
  return def;
}

BenchmarkDef ackley() {
  const Index d = 5;
  const double a = 20.0, b = 0.2, c = 2.0 * kPi;
  BenchmarkDef def;
  def.name = "ackley5";
  def.domain = Box(constant(d, -2.0), constant(d, 2.0));
  def.value = [=](const Vector& x) {
    const double r = std::sqrt(x.squaredNorm() / d);
    double cs = 0.0;
    for (Index i = 0; i < d; ++i) cs += std::cos(c * x[i]);
    return -a * std::exp(-b * r) - std::exp(cs / d) + a + std::numbers::e;
  };
  def.gradient = [=](const Vector& x) {
    const double r = std::sqrt(x.squaredNorm() / d);
    double cs = 0.0;
    for (Index i = 0; i < d; ++i) cs += std::cos(c * x[i]);
    const double e2 = std::exp(cs / d);
    Vector g(d);
    for (Index i = 0; i < d; ++i) {
      // The radial term is not differentiable at the origin; use 0 there.
      const double radial = r > 0.0 ? a * b * std::exp(-b * r) * x[i] / (d * r) : 0.0;
      g[i] = radial + e2 * c * std::sin(c * x[i]) / d;
    }
    return g;
  };
  def.min_value = 0.0;
  def.minimizers = {Vector::Zero(d)};
  def.default_mask.assign(d, true);
  def.default_q = 4;
  return def;
}

BenchmarkDef levy() {
  const Index d = 4;
  BenchmarkDef def;
  def.name = "levy4";
  def.domain = Box(constant(d, -10.0), constant(d, 10.0));
  def.value = [=](const Vector& x) {
    const Vector w = (1.0 + (x.array() - 1.0) / 4.0).matrix();
    double f = std::pow(std::sin(kPi * w[0]), 2);
    for (Index i = 0; i + 1 < d; ++i) {
      f += (w[i] - 1.0) * (w[i] - 1.0) * (1.0 + 10.0 * std::pow(std::sin(kPi * w[i] + 1.0), 2));
    }
    f += (w[d - 1] - 1.0) * (w[d - 1] - 1.0) * (1.0 + std::pow(std::sin(2.0 * kPi * w[d - 1]), 2));
    return f;
  };
  def.gradient = [=](const Vector& x) {
    const Vector w = (1.0 + (x.array() - 1.0) / 4.0).matrix();
    Vector gw = Vector::Zero(d);
    gw[0] += 2.0 * std::sin(kPi * w[0]) * std::cos(kPi * w[0]) * kPi;
    for (Index i = 0; i + 1 < d; ++i) {
      const double sn = std::sin(kPi * w[i] + 1.0), cn = std::cos(kPi * w[i] + 1.0);
      gw[i] += 2.0 * (w[i] - 1.0) * (1.0 + 10.0 * sn * sn) + (w[i] - 1.0) * (w[i] - 1.0) * 20.0 * sn * cn * kPi;
    }
    const double wl = w[d - 1];
    const double sn = std::sin(2.0 * kPi * wl), cn = std::cos(2.0 * kPi * wl);
    gw[d - 1] += 2.0 * (wl - 1.0) * (1.0 + sn * sn) + (wl - 1.0) * (wl - 1.0) * 2.0 * sn * cn * 2.0 * kPi;
    return Vector(gw / 4.0);
  };
  def.min_value = 0.0;
  def.minimizers = {constant(d, 1.0)};
  def.default_mask = {false, false, false, true};
  def.default_q = 8;
  return def;
}

BenchmarkDef hartmann() {
  static const double a[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                 {0.05, 10, 17, 0.1, 8, 14},
                                 {3, 3.5, 1.7, 10, 17, 8},
                                 {17, 8, 0.05, 10, 0.1, 14}};
  static const double p[4][6] = {{0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886},
                                 {0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991},
                                 {0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650},
                                 {0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381}};
  static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
  BenchmarkDef def;
  def.name = "hartmann6";
  def.domain = Box(constant(6, 0.0), constant(6, 1.0));
  def.value = [](const Vector& x) {
    double f = 0.0;
    for (int i = 0; i < 4; ++i) {
      double inner = 0.0;
      for (int j = 0; j < 6; ++j) inner += a[i][j] * (x[j] - p[i][j]) * (x[j] - p[i][j]);
      f -= alpha[i] * std::exp(-inner);
    }
    return f;
  };
  def.gradient = [](const Vector& x) {
    Vector g = Vector::Zero(6);
    for (int i = 0; i < 4; ++i) {
      double inner = 0.0;
      for (int j = 0; j < 6; ++j) inner += a[i][j] * (x[j] - p[i][j]) * (x[j] - p[i][j]);
      const double e = alpha[i] * std::exp(-inner);
      for (int j = 0; j < 6; ++j) g[j] += e * 2.0 * a[i][j] * (x[j] - p[i][j]);
    }
    return g;
  };
  def.min_value = -3.322368011415511;
  def.minimizers = {(Vector(6) << 0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573).finished()};
  def.default_mask.assign(6, true);
  def.default_q = 8;
  return def;
}

BenchmarkDef cosine() {
  const Index d = 8;
  BenchmarkDef def;
  def.name = "cosine8";
  def.domain = Box(constant(d, -1.0), constant(d, 1.0));
  def.value = [](const Vector& x) {
    double f = 0.0;
    for (Index i = 0; i < x.size(); ++i) f += x[i] * x[i] - 0.1 * std::cos(5.0 * kPi * x[i]);
    return f;
  };
  def.gradient = [](const Vector& x) {
    Vector g(x.size());
    for (Index i = 0; i < x.size(); ++i) g[i] = 2.0 * x[i] + 0.5 * kPi * std::sin(5.0 * kPi * x[i]);
    return g;
  };
  def.min_value = -0.8;
  def.minimizers = {Vector::Zero(d)};
  def.default_mask = {true, true, false, false, false, false, false, false};
  def.default_q = 8;
  return def;
}

void check_definition(const BenchmarkDef& def) {
  const GradientAudit audit = audit_gradient(def);
  if (!audit.passed) {
    std::ostringstream msg;
    msg << "benchmark " << def.name << " failed its gradient audit (max error " << audit.max_error << ")";
    throw std::logic_error(msg.str());
  }
  for (const auto& x : def.minimizers) {
    if (std::abs(def.value(x) - def.min_value) > 1e-6) {
      throw std::logic_error("benchmark " + def.name + ": stored minimum does not match its minimizer");
    }
  }
}

void check_mask(const BenchmarkDef& bench, const std::vector<bool>& mask) {
  require(mask.empty() || static_cast<Index>(mask.size()) == bench.dim(),
          "evaluate: mask length must equal the dimension");
}

}  // namespace

GradientAudit audit_gradient(const BenchmarkDef& bench, int points, double h, double tolerance,
                             std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GradientAudit out;
  const Index d = bench.dim();
  for (int k = 0; k < points; ++k) {
    Vector unit(d);
    for (Index i = 0; i < d; ++i) unit[i] = u(rng);
    const Vector x = bench.domain.from_unit(unit);
    const Vector g = bench.gradient(x);
    for (Index i = 0; i < d; ++i) {
      Vector up = x, down = x;
      up[i] += h;
      down[i] -= h;
      const double fd = (bench.value(up) - bench.value(down)) / (2.0 * h);
      out.max_error = std::max(out.max_error, std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  out.passed = out.max_error <= tolerance;
  return out;
}

const std::vector<BenchmarkDef>& benchmark_registry() {
  static const std::vector<BenchmarkDef> registry = [] {
    std::vector<BenchmarkDef> defs{branin(), rosenbrock(), ackley(), levy(), hartmann(), cosine()};
    for (const auto& def : defs) check_definition(def);
    return defs;
  }();
  return registry;
}

std::vector<std::string> benchmark_names() {
  std::vector<std::string> names;
  for (const auto& def : benchmark_registry()) names.push_back(def.name);
  return names;
}

const BenchmarkDef& find_benchmark(const std::string& name) {
  for (const auto& def : benchmark_registry()) {
    if (def.name == name) return def;
  }
  throw ContractViolation("unknown benchmark '" + name + "'");
}

ObservationRecord evaluate(const BenchmarkDef& bench, const Vector& x, const NoiseSpec& noise,
                           const std::vector<bool>& mask, std::uint64_t seed) {
  require(x.size() == bench.dim(), "evaluate: dimension mismatch");
  require(bench.domain.contains(x, 1e-12), "evaluate: point outside the benchmark domain");
  require(noise.sigma >= 0.0, "evaluate: noise standard deviation must be nonnegative");
  check_mask(bench, mask);
  Rng rng = make_rng(seed, Stream::kNoise);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ObservationRecord rec;
  rec.location = x;
  rec.value = bench.value(x) + noise.sigma * gauss(rng);
  if (std::find(mask.begin(), mask.end(), true) != mask.end()) {
    const Vector g = bench.gradient(x);
    rec.partials.assign(mask.size(), std::nullopt);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const double eps = noise.sigma * gauss(rng);
      if (mask[i]) rec.partials[i] = g[static_cast<Index>(i)] + eps;
    }
  }
  return rec;
}

ObservationRecord evaluate_directional(const BenchmarkDef& bench, const Vector& x, const Vector& theta,
                                       const NoiseSpec& noise, std::uint64_t seed) {
  require(x.size() == bench.dim() && theta.size() == bench.dim(), "evaluate_directional: dimension mismatch");
  require(bench.domain.contains(x, 1e-12), "evaluate_directional: point outside the benchmark domain");
  require(std::abs(theta.norm() - 1.0) <= 1e-12, "evaluate_directional: direction must be unit norm");
  Rng rng = make_rng(seed, Stream::kNoise);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ObservationRecord rec;
  rec.location = x;
  rec.value = bench.value(x) + noise.sigma * gauss(rng);
  Vector g = bench.gradient(x);
  for (Index i = 0; i < g.size(); ++i) g[i] += noise.sigma * gauss(rng);
  rec.directional = DirectionalObservation{theta, theta.dot(g)};
  return rec;
}

Regret immediate_regret(const BenchmarkDef& bench, const Vector& x) {
  require(x.size() == bench.dim(), "immediate_regret: dimension mismatch");
  require(bench.domain.contains(x, 1e-9), "immediate_regret: point outside the benchmark domain");
  Regret r;
  r.regret = std::max(bench.value(x) - bench.min_value, 0.0);
  r.log10_regret = std::log10(std::max(r.regret, 1e-12));
  return r;
}

// ---------------------------------------------------------------------------

namespace {

PosteriorCurve curve(const GpPosterior& p, const Vector& grid) {
  PosteriorCurve c{Vector(grid.size()), Vector(grid.size())};
  for (Index i = 0; i < grid.size(); ++i) {
    const Vector x = Vector::Constant(1, grid[i]);
    c.mean[i] = p.mean_value(x);
    c.sd[i] = std::sqrt(std::max(p.variance(x), 0.0));
  }
  return c;
}

Index argmax(const Vector& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

Figure1Data figure1_scenario(std::uint64_t seed, const Figure1Options& options) {
  require(options.grid_size >= 2, "figure1_scenario: grid needs at least two points");
  require(options.history_size >= 1 && options.history_size < options.grid_size,
          "figure1_scenario: invalid history size");
  require(options.fantasies >= 2, "figure1_scenario: need at least two fantasies");

  const double obs_noise = 1e-6;
  const KernelSpec truth_kernel = KernelSpec::isotropic(1, 1.0, options.length_scale);
  const KernelSpec model_kernel = KernelSpec::isotropic(1, 1.0, options.length_scale, obs_noise, obs_noise);

  // A smooth sample path: the interpolant of prior draws at 25 anchors.
  Rng rng = make_rng(seed, Stream::kScenario);
  const Index anchors = 25;
  Matrix k(anchors, anchors);
  std::vector<Vector> anchor_x;
  for (Index i = 0; i < anchors; ++i) anchor_x.push_back(Vector::Constant(1, (i + 0.5) / anchors));
  for (Index i = 0; i < anchors; ++i) {
    for (Index j = 0; j < anchors; ++j) k(i, j) = truth_kernel.value(anchor_x[i], anchor_x[j]);
  }
  const Matrix l = jittered_cholesky(k, 1.0).lower;
  const Vector draw = l * standard_normal(rng, anchors);
  std::vector<ObservationRecord> anchor_records;
  for (Index i = 0; i < anchors; ++i) anchor_records.push_back(ObservationRecord::value_only(anchor_x[i], draw[i]));
  const GpPosterior path(0.0, KernelSpec::isotropic(1, 1.0, options.length_scale, 1e-10), anchor_records);

  Figure1Data out;
  const Index g = options.grid_size;
  out.grid.resize(g);
  out.truth.resize(g);
  out.truth_gradient.resize(g);
  for (Index i = 0; i < g; ++i) {
    out.grid[i] = static_cast<double>(i) / static_cast<double>(g - 1);
    const Vector x = Vector::Constant(1, out.grid[i]);
    out.truth[i] = path.mean_value(x);
    out.truth_gradient[i] = mean_gradient(path, x)[0];
  }

  // History at distinct random grid points.
  std::vector<Index> order(static_cast<std::size_t>(g));
  for (Index i = 0; i < g; ++i) order[static_cast<std::size_t>(i)] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> chosen(order.begin(), order.begin() + options.history_size);
  std::sort(chosen.begin(), chosen.end());
  std::vector<ObservationRecord> values, full;
  for (Index i : chosen) {
    const Vector x = Vector::Constant(1, out.grid[i]);
    out.history_x.push_back(out.grid[i]);
    values.push_back(ObservationRecord::value_only(x, out.truth[i]));
    full.push_back(ObservationRecord::full(x, out.truth[i], Vector::Constant(1, out.truth_gradient[i])));
  }
  const GpPosterior p_values(0.0, model_kernel, values);
  const GpPosterior p_full(0.0, model_kernel, full);
  out.without_gradients = curve(p_values, out.grid);
  out.with_gradients = curve(p_full, out.grid);

  const SearchSpace space(Box::unit(1));
  const KnowledgeGradient kg{ObservationModel::value_only(), InnerOptions{}};
  const KnowledgeGradient dkg{ObservationModel::full_gradient(), InnerOptions{}};
  const std::uint64_t acq_seed = derive_seed(seed, Stream::kFantasy);
  out.kg.resize(g);
  out.kg_se.resize(g);
  out.dkg.resize(g);
  out.dkg_se.resize(g);
  out.ei.resize(g);
  out.dei.resize(g);
  for (Index i = 0; i < g; ++i) {
    const Vector x = Vector::Constant(1, out.grid[i]);
    const CandidateBatch batch{{x}, std::nullopt};
    const auto a = kg.value(p_values, batch, space, options.fantasies, acq_seed);
    const auto b = dkg.value(p_full, batch, space, options.fantasies, acq_seed);
    out.kg[i] = a.value;
    out.kg_se[i] = a.std_error;
    out.dkg[i] = b.value;
    out.dkg_se[i] = b.std_error;
    out.ei[i] = ei_value(p_values, x);
    out.dei[i] = ei_value(p_full, x);
  }
  out.kg_choice = argmax(out.kg);
  out.dkg_choice = argmax(out.dkg);
  out.ei_choice = argmax(out.ei);
  out.dei_choice = argmax(out.dei);

  auto after = [&](std::vector<ObservationRecord> history, Index at, bool with_gradient) {
    const Vector x = Vector::Constant(1, out.grid[at]);
    history.push_back(with_gradient ? ObservationRecord::full(x, out.truth[at], Vector::Constant(1, out.truth_gradient[at]))
                                    : ObservationRecord::value_only(x, out.truth[at]));
    return curve(GpPosterior(0.0, model_kernel, std::move(history)), out.grid);
  };
  out.after_kg = after(values, out.kg_choice, false);
  out.after_ei = after(values, out.ei_choice, false);
  out.after_dkg = after(full, out.dkg_choice, true);
  out.after_dei = after(full, out.dei_choice, true);
  return out;
}

}  // namespace dkg
