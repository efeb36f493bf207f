// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers as arguments to run
// a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dkg/acquisition.hpp"
#include "dkg/bench.hpp"
#include "dkg/design.hpp"
#include "dkg/driver.hpp"
#include "dkg/experiment.hpp"
#include "dkg/hyper.hpp"
#include "dkg/linalg.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace dkg;
using testing_support::random_kernel;
using testing_support::random_record;
using testing_support::uniform;
namespace fs = std::filesystem;

namespace {

// Scenario seed of the one-dimensional illustration (also used by
// tools/configs/figure1.json).
constexpr std::uint64_t kFigure1Seed = 11;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
  return buf;
}

// KG-family estimates produced by criteria 3 and 4, checked by criterion 5.
struct Recorded {
  std::string label;
  AcquisitionEstimate estimate;
};
std::vector<Recorded> g_estimates;

void record(const std::string& label, const AcquisitionEstimate& e) { g_estimates.push_back({label, e}); }

GpPosterior random_posterior(std::mt19937_64& rng, Index d, int records) {
  const KernelSpec k = random_kernel(rng, d, true);
  std::vector<ObservationRecord> history;
  for (int r = 0; r < records; ++r) history.push_back(random_record(rng, d));
  return build_posterior(0.1, k, history);
}

// ---------------------------------------------------------------------------

Outcome posterior_oracle() {
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Index d = 1 + t % 3;
    const KernelSpec k = random_kernel(rng, d);
    std::vector<ObservationRecord> history;
    const int records = 1 + t % 6;
    for (int r = 0; r < records; ++r) history.push_back(random_record(rng, d));
    const double mu = std::normal_distribution<double>(0.0, 1.0)(rng);
    const GpPosterior p = build_posterior(mu, k, history);
    std::vector<Vector> xs;
    for (int i = 0; i < 4; ++i) xs.push_back(uniform(rng, d));
    xs.push_back(history.front().location);
    const auto want = oracle::condition(history, k, mu, xs);
    const auto got = posterior_query(p, xs);
    worst = std::max(worst, (want.means - got.means).cwiseAbs().maxCoeff());
    worst = std::max(worst, (want.covariance - got.covariance).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8, fmt("200 histories, max abs error %.2e (limit 1e-8)", worst)};
}

// d k(x, x') / d x'_j, written out by hand.
double dk_dxp(const Vector& x, const Vector& xp, const KernelSpec& k, Index j) {
  const double l2 = k.length_scales[j] * k.length_scales[j];
  return (x[j] - xp[j]) / l2 * oracle::se(x, xp, k);
}

Outcome kernel_audit() {
  std::mt19937_64 rng(1002);
  const double h = 1e-6;
  double worst = 0.0;
  int entries = 0;
  for (Index d : {1, 2, 3, 6}) {
    for (int pair = 0; pair < 100; ++pair) {
      const KernelSpec k = random_kernel(rng, d);
      const Vector x = uniform(rng, d), xp = uniform(rng, d);
      const Matrix block = joint_covariance(x, xp, k);
      const double floor = 1e-5 * block.cwiseAbs().maxCoeff();
      auto rel = [&](double got, double fd) {
        ++entries;
        return std::abs(got - fd) / std::max(std::abs(fd), floor);
      };
      for (Index j = 0; j < d; ++j) {
        const double fd_xp = oracle::fd_central(
            [&](double s) {
              Vector y = xp;
              y[j] += s;
              return oracle::se(x, y, k);
            },
            h);
        const double fd_x = oracle::fd_central(
            [&](double s) {
              Vector y = x;
              y[j] += s;
              return oracle::se(y, xp, k);
            },
            h);
        worst = std::max({worst, rel(block(0, j + 1), fd_xp), rel(block(j + 1, 0), fd_x)});
        for (Index i = 0; i < d; ++i) {
          const double fd_h = oracle::fd_central(
              [&](double s) {
                Vector y = x;
                y[i] += s;
                return dk_dxp(y, xp, k, j);
              },
              h);
          worst = std::max(worst, rel(block(i + 1, j + 1), fd_h));
        }
      }
    }
  }
  return {worst <= 1e-4, fmt("%.0f entries over d in {1,2,3,6}, max rel error %.2e (limit 1e-4)", entries, worst)};
}

// Instances with a near-stationary coordinate are skipped. With a finite draw
// set, the few fantasies whose argmin switches inside the difference window
// add zero-mean noise of about 0.5% of the largest derivative, which swamps a
// relative tolerance on a coordinate much smaller than that.
constexpr double kMinFdMagnitude = 2e-3;
constexpr double kMinFdFraction = 0.2;

Outcome envelope_gradient() {
  const Index draws = 1 << 12;
  const double h = 1e-3;
  const InnerOptions inner;
  const ObservationModel model = ObservationModel::directional();
  double worst = 0.0;
  bool pass = true;
  int skipped = 0;
  std::mt19937_64 rng(1003);
  for (Index d : {1, 1, 1, 2}) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 40) return {false, "no instance without near-stationary coordinates"};
      const GpPosterior p = random_posterior(rng, d, 3);
      const SearchSpace space(Box::unit(d));
      CandidateBatch batch;
      for (int i = 0; i < 2; ++i) batch.points.push_back(uniform(rng, d, 0.1, 0.9));
      Rng dir_rng(rng());
      batch.direction = random_direction(dir_rng, d);
      const std::uint64_t seed = rng();
      const std::string label = "C3 d=" + std::to_string(d) + " attempt " + std::to_string(attempt);

      auto value_at = [&](const CandidateBatch& b) {
        const auto e = dkg_value(p, b, space, draws, seed, model, inner);
        record(label, e);
        return e.value;
      };
      value_at(batch);
      const Index n = 2 * d + d;
      Vector fd(n);
      for (Index c = 0; c < n; ++c) {
        const bool theta = c >= 2 * d;
        fd[c] = oracle::fd_central(
            [&](double s) {
              CandidateBatch moved = batch;
              if (theta) {
                Vector t = *batch.direction;
                t[c - 2 * d] += s;
                moved.direction = t.normalized();
              } else {
                moved.points[static_cast<std::size_t>(c / d)][c % d] += s;
              }
              return value_at(moved);
            },
            h);
      }
      const Index tested = d == 1 ? 2 * d : n;
      const double smallest = fd.head(tested).cwiseAbs().minCoeff();
      if (smallest < kMinFdMagnitude || smallest < kMinFdFraction * fd.cwiseAbs().maxCoeff()) {
        ++skipped;
        continue;
      }

      const KnowledgeGradient kg{model, inner};
      const auto starts = inner_starts(p, space, inner, seed);
      const Index m = SigmaFactor(p, batch, model).fantasy_dim();
      Vector mean_grad = Vector::Zero(n);
      for (Index f = 0; f < draws; ++f) mean_grad += kg.gradient(p, batch, fantasy_draw(seed, f, m), space, starts);
      mean_grad /= static_cast<double>(draws);
      for (Index c = 0; c < n; ++c) {
        if (std::getenv("DKG_ACCEPTANCE_VERBOSE")) {
          std::printf("  %s coord %ld: gradient %.6g fd %.6g\n", label.c_str(), static_cast<long>(c), mean_grad[c], fd[c]);
        }
        if (c >= tested) {
          // A unit direction in one dimension cannot rotate: both are exactly zero.
          if (mean_grad[c] != 0.0 || fd[c] != 0.0) pass = false;
          continue;
        }
        const double err = std::abs(mean_grad[c] - fd[c]) / std::abs(fd[c]);
        worst = std::max(worst, err);
        if (!(err <= 0.05)) pass = false;
      }
      break;
    }
  }
  return {pass, fmt("3 one-d + 1 two-d instances, 2^12 CRN draws, max rel error %.4f (limit 0.05); "
                    "1-d direction coordinate exactly zero in gradient and FD; %.0f near-stationary instances skipped",
                    worst, skipped)};
}

Outcome voi_dominance() {
  const Index n = 25;
  const std::vector<Vector> grid = grid_1d(0.0, 1.0, n);
  const SearchSpace space(Box::unit(1), grid);
  std::mt19937_64 rng(1004);
  std::uniform_int_distribution<int> pick(0, n - 1);
  int dominated = 0, strict = 0;
  double worst_margin = 1e300;
  for (int t = 0; t < 20; ++t) {
    const GpPosterior p = random_posterior(rng, 1, 3);
    CandidateBatch batch;
    batch.points = {grid[static_cast<std::size_t>(pick(rng))], grid[static_cast<std::size_t>(pick(rng))]};
    batch.direction = Vector::Ones(1);
    const std::uint64_t seed = 900 + static_cast<std::uint64_t>(t);
    const auto dkg = dkg_value(p, batch, space, 1 << 15, seed);
    const auto kg = kg_value(p, batch, space, 1 << 15, seed);
    record("C4 d-KG " + std::to_string(t), dkg);
    record("C4 KG " + std::to_string(t), kg);
    const double se = combined_std_error(dkg, kg);
    dominated += dkg.value >= kg.value - 3.0 * se;
    strict += dkg.value - kg.value > 3.0 * se;
    worst_margin = std::min(worst_margin, (dkg.value - kg.value) / se);
  }
  return {dominated == 20 && strict >= 10,
          fmt("d-KG >= KG - 3 SE in %.0f/20, strictly above by > 3 SE in %.0f/20 (need 20 and 10); "
              "smallest gap %.1f SE",
              dominated, strict, worst_margin)};
}

Outcome nonnegativity() {
  if (g_estimates.empty()) return {false, "criteria 3 and 4 must run first"};
  int bad = 0;
  double worst = 1e300;
  for (const auto& r : g_estimates) {
    const double z = r.estimate.std_error > 0 ? r.estimate.value / r.estimate.std_error : r.estimate.value >= 0 ? 1e300 : -1e300;
    worst = std::min(worst, z);
    bad += r.estimate.value < -3.0 * r.estimate.std_error;
  }
  return {bad == 0, fmt("%.0f estimates, %.0f below -3 SE; smallest value/SE %.1f", static_cast<double>(g_estimates.size()), bad, worst)};
}

Outcome consistency() {
  const Index n = 20;
  const std::vector<Vector> grid = grid_1d(0.0, 1.0, n);
  const KernelSpec k = KernelSpec::isotropic(1, 1.0, 0.2);
  Matrix cov(2 * n, 2 * n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) cov.block(2 * i, 2 * j, 2, 2) = joint_covariance(grid[i], grid[j], k);
  }
  const Matrix chol = jittered_cholesky(cov, 1.0).lower;
  int hits = 0, incomplete = 0;
  for (int rep = 0; rep < 50; ++rep) {
    Rng rng = make_rng(static_cast<std::uint64_t>(rep), Stream::kScenario);
    const Vector truth = chol * standard_normal(rng, 2 * n);
    ProblemSpec s;
    s.domain = Box::unit(1);
    s.q = 1;
    s.iterations = 20;
    s.mode = FantasyMode::kDirectional;
    s.finite_domain = grid;
    s.initial_design = 0;
    s.fixed_hyper = HyperParameters{k, 0.0};
    s.standardize = false;
    s.record_timing = false;
    auto objective = [&](const EvaluationRequest& r) {
      Index idx = 0;
      for (Index i = 0; i < n; ++i) {
        if ((grid[static_cast<std::size_t>(i)] - r.x).norm() < 1e-12) idx = i;
      }
      ObservationRecord rec = ObservationRecord::value_only(r.x, truth[2 * idx]);
      rec.directional = DirectionalObservation{*r.direction, (*r.direction)[0] * truth[2 * idx + 1]};
      return EvaluationResult::success(rec);
    };
    const RunTrace trace = dkg::run(s, objective, static_cast<std::uint64_t>(rep));
    Index best = 0;
    for (Index i = 1; i < n; ++i) {
      if (truth[2 * i] < truth[2 * best]) best = i;
    }
    incomplete += !trace.complete;
    hits += trace.complete &&
            (trace.iterations.back().recommendation - grid[static_cast<std::size_t>(best)]).norm() < 1e-12;
  }
  return {hits >= 48, fmt("recommendation equals the true argmin after 20 iterations in %.0f/50 runs "
                          "(need >= 95%%), %.0f incomplete",
                          hits, incomplete)};
}

Outcome figure1_property() {
  const Figure1Data data = figure1_scenario(kFigure1Seed, Figure1Options{});
  double excess = -1e300;
  for (Index i = 0; i < data.grid.size(); ++i) {
    const double with = data.with_gradients.sd[i] * data.with_gradients.sd[i];
    const double without = data.without_gradients.sd[i] * data.without_gradients.sd[i];
    excess = std::max(excess, with - without);
  }
  const Index a = data.dkg_choice, b = data.dei_choice;
  const double gap = data.dkg[a] - data.dkg[b];
  const double se = std::hypot(data.dkg_se[a], data.dkg_se[b]);
  return {excess <= 1e-10 && gap > 3.0 * se,
          fmt("max(var with - var without) = %.1e (limit 1e-10); d-KG at its choice x=%.2f exceeds d-KG at the "
              "d-EI choice by %.1f SE (need > 3)",
              excess, data.grid[a], gap / se)};
}

double final_median(const ExperimentResult& result, const BenchmarkDef& bench) {
  std::vector<double> v;
  for (const auto& r : result.replications) {
    if (r.complete) v.push_back(immediate_regret(bench, r.trace.iterations.back().recommendation).log10_regret);
  }
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return std::numeric_limits<double>::infinity();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome branin_regression(const fs::path& work) {
  const BenchmarkDef& bench = find_benchmark("branin2");
  auto config = [&](const char* acq, const char* mode) {
    ExperimentConfig c = parse_config_text(std::string(R"({"benchmark": "branin2", "q": 4, "noise_sigma": 0.5,
      "iterations": 10, "replications": 10, "seed": 2024, "timing": "none", "acquisition": ")") + acq +
                                           R"(", "mode": ")" + mode + R"("})");
    c.output_dir = (work / ("branin_" + std::string(acq))).string();
    return c;
  };
  const ExperimentResult dkg = run_experiment(config("dkg", "full-gradient"));
  const ExperimentResult kg = run_experiment(config("kg", "value-only"));
  const double md = final_median(dkg, bench), mk = final_median(kg, bench);
  return {dkg.completed() == 10 && kg.completed() == 10 && md <= mk && md <= 0.0,
          fmt("final median log10 regret: d-KG %.3f, KG %.3f (need d-KG <= KG and <= 0); %.0f+%.0f/20 runs complete", md,
              mk, dkg.completed(), kg.completed())};
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::istringstream in(line);
  for (std::string c; std::getline(in, c, ',');) cells.push_back(c);
  return cells;
}

// Schema check of a trace file against the run it came from.
std::string validate_trace(const fs::path& file, const ExperimentConfig& c, const BenchmarkDef& bench) {
  std::ifstream in(file, std::ios::binary);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> want{"iteration", "eval_count"};
  for (Index i = 0; i < bench.dim(); ++i) want.push_back("rec_x" + std::to_string(i));
  for (const char* s : {"rec_value", "regret", "log10_regret", "acq_value", "wall_ms"}) want.push_back(s);
  if (split(line) != want) return "bad header";
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto cells = split(line);
    if (cells.size() != want.size()) return "bad row width";
    std::vector<double> v;
    for (const auto& s : cells) {
      std::size_t used = 0;
      v.push_back(std::stod(s, &used));
      if (used != s.size() || !std::isfinite(v.back())) return "non-numeric cell";
    }
    const Index d = bench.dim();
    if (v[0] != rows || v[1] != rows * c.q) return "bad iteration bookkeeping";
    Vector x(d);
    for (Index i = 0; i < d; ++i) x[i] = v[static_cast<std::size_t>(2 + i)];
    if (!bench.domain.contains(x, 0.0)) return "recommendation outside the domain";
    const double value = bench.value(x);
    const double regret = std::max(value - bench.min_value, 0.0);
    const std::size_t o = static_cast<std::size_t>(2 + d);
    if (std::abs(v[o] - value) > 1e-9 * std::max(1.0, std::abs(value))) return "rec_value mismatch";
    if (std::abs(v[o + 1] - regret) > 1e-9 * std::max(1.0, regret)) return "regret mismatch";
    if (std::abs(v[o + 2] - std::log10(std::max(regret, 1e-12))) > 1e-9) return "log10_regret mismatch";
    if (v[o + 4] < 0.0) return "negative wall_ms";
  }
  if (rows != c.iterations) return "row count";
  return {};
}

Outcome mask_fidelity(const fs::path& work) {
  std::string notes;
  bool pass = true;
  for (const auto& [name, partial] : {std::pair<std::string, int>{"rosenbrock3", 2}, {"levy4", 3}}) {
    const BenchmarkDef& bench = find_benchmark(name);
    ExperimentConfig c = parse_config_text(R"({"benchmark": ")" + name +
                                           R"(", "acquisition": "dkg", "mode": "full-gradient", "iterations": 3,
      "timing": "none", "seed": 7, "mask": [)" + std::to_string(partial) + "]}");
    c.output_dir = (work / ("mask_" + name)).string();
    const ExperimentResult result = run_experiment(c);
    const ReplicationOutcome& rep = result.replications.front();
    int points = 0, wrong = 0;
    auto check = [&](const ObservationRecord& r) {
      ++points;
      bool ok = r.channel_count() == 2 && r.value.has_value() && !r.directional &&
                r.partials.size() == static_cast<std::size_t>(bench.dim());
      for (std::size_t i = 0; ok && i < r.partials.size(); ++i) ok = r.partials[i].has_value() == (static_cast<int>(i) == partial);
      wrong += !ok;
    };
    for (const auto& r : rep.trace.initial_design) check(r);
    for (const auto& it : rep.trace.iterations) {
      if (static_cast<Index>(it.observations.size()) != c.q) ++wrong;
      for (const auto& r : it.observations) check(r);
    }
    const std::string schema = rep.complete ? validate_trace(rep.trace_file, c, bench) : rep.failure;
    pass = pass && rep.complete && wrong == 0 && schema.empty();
    notes += (notes.empty() ? "" : "; ") + name + ": " + std::to_string(points) + " points, " + std::to_string(wrong) + " with other than 2 channels, trace " +
             (schema.empty() ? std::string("valid") : schema);
  }
  return {pass, notes};
}

Outcome mcmc_sanity() {
  Vector mu(2);
  mu << 3.0, -2.0;
  Matrix cov(2, 2);
  cov << 1.0, -0.7, -0.7, 2.0;
  const Matrix prec = cov.inverse();
  const EnsembleSampler sampler([&](const Vector& x) { return -0.5 * (x - mu).dot(prec * (x - mu)); });
  Rng rng = make_rng(1010, Stream::kHyper);
  Matrix init(2, 20);
  for (Index k = 0; k < 20; ++k) init.col(k) = standard_normal(rng, 2);
  const auto result = sampler.run(init, 1000, 500, 20, rng);
  Vector mean = Vector::Zero(2);
  Matrix second = Matrix::Zero(2, 2);
  double count = 0;
  for (const auto& snap : result.snapshots) {
    for (Index k = 0; k < snap.cols(); ++k) {
      mean += snap.col(k);
      count += 1;
    }
  }
  mean /= count;
  for (const auto& snap : result.snapshots) {
    for (Index k = 0; k < snap.cols(); ++k) second += (snap.col(k) - mean) * (snap.col(k) - mean).transpose();
  }
  const Matrix sample_cov = second / (count - 1);
  double mean_err = 0.0, cov_err = 0.0;
  for (Index i = 0; i < 2; ++i) {
    mean_err = std::max(mean_err, std::abs(mean[i] - mu[i]) / std::abs(mu[i]));
    for (Index j = 0; j < 2; ++j) {
      cov_err = std::max(cov_err, std::abs(sample_cov(i, j) - cov(i, j)) / std::sqrt(cov(i, i) * cov(j, j)));
    }
  }

  // Hyperparameter samples on a noisy Branin history with full gradients,
  // mapped to the unit cube as the driver does.
  const BenchmarkDef& branin = find_benchmark("branin2");
  Rng design_rng = make_rng(1011, Stream::kDesign);
  std::vector<ObservationRecord> history;
  std::vector<double> values;
  const auto points = shifted_halton(Box::unit(2), 12, design_rng);
  for (const auto& u : points) values.push_back(branin.value(branin.domain.from_unit(u)));
  double m = 0, s = 0;
  for (double v : values) m += v;
  m /= static_cast<double>(values.size());
  for (double v : values) s += (v - m) * (v - m);
  s = std::sqrt(s / static_cast<double>(values.size() - 1));
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vector x = branin.domain.from_unit(points[i]);
    const ObservationRecord raw = evaluate(branin, x, NoiseSpec{0.5}, {true, true}, 1012 + i);
    ObservationRecord rec = ObservationRecord::value_only(points[i], (*raw.value - m) / s);
    rec.partials.resize(2);
    for (Index j = 0; j < 2; ++j) rec.partials[j] = *raw.partials[j] * branin.domain.width()[j] / s;
    history.push_back(rec);
  }
  SamplerOptions options;
  const auto hyper = sample_hyperparameters(history, 2, options, 1013);
  int finite = 0;
  for (const auto& h : hyper.samples) finite += std::isfinite(h.log_posterior);
  const bool pass = result.snapshots.size() * 20 >= 10000 && mean_err <= 0.05 && cov_err <= 0.05 &&
                    hyper.samples.size() == 10 && finite == 10;
  return {pass, fmt("%.0f samples: mean rel error %.3f, covariance error %.3f (limit 0.05); %.0f/10 hyper samples with "
                    "finite log posterior",
                    static_cast<double>(result.snapshots.size() * 20), mean_err, cov_err, finite)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  if (only.count(5) != 0) {
    only.insert(3);
    only.insert(4);
  }
  const fs::path work = fs::temp_directory_path() / "dkg_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"posterior oracle equivalence", posterior_oracle},
      {"kernel derivative audit", kernel_audit},
      {"envelope gradient", envelope_gradient},
      {"value of derivative information", voi_dominance},
      {"nonnegativity", nonnegativity},
      {"consistency on a finite domain", consistency},
      {"illustration property", figure1_property},
      {"Branin regression", [&] { return branin_regression(work); }},
      {"mask fidelity", [&] { return mask_fidelity(work); }},
      {"MCMC sanity", mcmc_sanity},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && only.count(id) == 0) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !out.pass;
    std::printf("%s C%d %s: %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
