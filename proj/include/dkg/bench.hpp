#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dkg/observation.hpp"
#include "dkg/types.hpp"

namespace dkg {

/// A synthetic test function on its native (raw) box domain.
struct BenchmarkDef {
  std::string name;
  Box domain;
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  double min_value = 0.0;
  std::vector<Vector> minimizers;
  /// Observable partials by default.
  std::vector<bool> default_mask;
  Index default_q = 8;

  Index dim() const { return domain.dim(); }
};

/// branin2, rosenbrock3, ackley5, levy4, hartmann6, cosine8. Every entry has
/// passed the gradient and minimum audits when this returns.
const std::vector<BenchmarkDef>& benchmark_registry();
std::vector<std::string> benchmark_names();
/// Throws ContractViolation for an unknown name.
const BenchmarkDef& find_benchmark(const std::string& name);

struct GradientAudit {
  double max_error = 0.0;
  bool passed = false;
};

/// Central differences with step h at n uniformly drawn points; the error of
/// each partial is measured relative to max(1, |finite difference|).
GradientAudit audit_gradient(const BenchmarkDef& bench, int points = 100, double h = 1e-6,
                             double tolerance = 1e-5, std::uint64_t seed = 1);

struct NoiseSpec {
  double sigma = 0.5;
};

/// Noisy value plus the masked partials, each perturbed by independent
/// N(0, sigma^2) noise. Empty mask means no partials.
ObservationRecord evaluate(const BenchmarkDef& bench, const Vector& x, const NoiseSpec& noise,
                           const std::vector<bool>& mask, std::uint64_t seed);

/// Noisy value plus theta^T (grad f + eps), eps ~ N(0, sigma^2 I).
ObservationRecord evaluate_directional(const BenchmarkDef& bench, const Vector& x, const Vector& theta,
                                       const NoiseSpec& noise, std::uint64_t seed);

struct Regret {
  double regret = 0.0;
  double log10_regret = 0.0;
};

/// f(x) - f*, clipped below at 0 (log10 taken after flooring at 1e-12).
Regret immediate_regret(const BenchmarkDef& bench, const Vector& x);

// --- One-dimensional illustration ------------------------------------------

struct Figure1Options {
  Index grid_size = 101;
  Index history_size = 4;
  Index fantasies = 256;
  double length_scale = 0.1;
};

struct PosteriorCurve {
  Vector mean;
  Vector sd;
};

struct Figure1Data {
  Vector grid;
  Vector truth;
  Vector truth_gradient;
  std::vector<double> history_x;
  PosteriorCurve without_gradients;
  PosteriorCurve with_gradients;
  Vector kg, kg_se, dkg, dkg_se, ei, dei;
  /// Grid indices chosen by each acquisition.
  Index kg_choice = 0, dkg_choice = 0, ei_choice = 0, dei_choice = 0;
  /// Posteriors after each method's sample (value only for KG/EI, value and
  /// derivative for d-KG/d-EI).
  PosteriorCurve after_kg, after_dkg, after_ei, after_dei;
};

/// Draws a smooth 1-d GP sample path on [0, 1], fixes a small history and
/// evaluates the four acquisitions with and without gradient observations.
Figure1Data figure1_scenario(std::uint64_t seed, const Figure1Options& options = {});

}  // namespace dkg
