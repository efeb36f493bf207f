#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dkg/posterior.hpp"
#include "dkg/rng.hpp"

namespace dkg {

/// Which channels a future evaluation reveals.
enum class FantasyMode { kDirectional, kFullGradient, kValueOnly };

struct ObservationModel {
  FantasyMode mode = FantasyMode::kDirectional;
  /// Used in full-gradient mode; empty means every partial.
  std::vector<bool> partial_mask;

  static ObservationModel directional() { return {FantasyMode::kDirectional, {}}; }
  static ObservationModel value_only() { return {FantasyMode::kValueOnly, {}}; }
  static ObservationModel full_gradient(std::vector<bool> mask = {}) {
    return {FantasyMode::kFullGradient, std::move(mask)};
  }

  bool uses_direction() const { return mode == FantasyMode::kDirectional; }
  /// Observed partial indices in full-gradient mode.
  std::vector<Index> observed_partials(Index dim) const;
  Index channels_per_point(Index dim) const;
};

/// Where x ranges in the inner problem and candidates live in the outer one:
/// either the whole box or a finite set of points inside it.
struct SearchSpace {
  Box box;
  std::vector<Vector> finite;

  explicit SearchSpace(Box b) : box(std::move(b)) {}
  SearchSpace(Box b, std::vector<Vector> points) : box(std::move(b)), finite(std::move(points)) {}

  bool is_finite() const { return !finite.empty(); }
  Index dim() const { return box.dim(); }
};

struct CandidateBatch {
  std::vector<Vector> points;
  std::optional<Vector> direction;

  Index size() const { return static_cast<Index>(points.size()); }
  void validate(const Box& box, const ObservationModel& model) const;
};

/// Standardized fantasy randomness W: 2q entries in directional mode,
/// q(1+#partials) in full-gradient mode, q when value-only.
struct FantasyDraw {
  Vector w;
};

struct AcquisitionEstimate {
  double value = 0.0;
  double std_error = 0.0;
  Index num_fantasies = 0;
};

/// Standard error of the difference of two estimates, combined in quadrature.
double combined_std_error(const AcquisitionEstimate& a, const AcquisitionEstimate& b);

/// x -> constant + sum_a beta_a * c_a^T Ktilde(x, x_a) e_0, evaluated together
/// with its x-gradient. Both the posterior mean and every fantasy posterior
/// mean have this form. Centers are stored length-scaled, one array column
/// per coordinate, so an evaluation is a few passes over contiguous arrays.
class KernelExpansion {
 public:
  KernelExpansion(const KernelSpec& kernel, const Matrix& centers, const Matrix& functionals,
                  const Vector& coefficients, double constant);

  double value(const Vector& x, Vector* gradient = nullptr) const;

 private:
  Eigen::ArrayXd inv_length_;
  Eigen::ArrayXXd centers_;     // N x d, x_a / l
  Eigen::ArrayXXd derivative_;  // N x d, c_a(1..d) / l
  Eigen::ArrayXd value_part_;   // N, c_a(0)
  Eigen::ArrayXd weight_;       // N, alpha * beta_a
  double constant_;
  mutable Eigen::ArrayXXd diff_;
  mutable Eigen::ArrayXd quad_, dir_, g_;
};

/// The sigma-hat factor of a candidate batch: with D the Cholesky factor of
/// the fantasy-observation covariance, row(x) = Khat(x, z) D^{-T} is the map
/// from W to the change of the posterior mean of f at x.
///
/// Fantasy channels are ordered channel-major: all q value channels first,
/// then each derivative channel over the q points. The leading q x q block of
/// D is therefore the factor of the value-only fantasy model, so a d-KG draw
/// and a KG draw that share the first q entries of W describe the same
/// fantasy function values.
class SigmaFactor {
 public:
  SigmaFactor(const GpPosterior& posterior, const CandidateBatch& batch, ObservationModel model);

  const GpPosterior& posterior() const { return *posterior_; }
  const CandidateBatch& batch() const { return batch_; }
  const ObservationModel& model() const { return model_; }
  Index fantasy_dim() const { return static_cast<Index>(fantasy_point_.size()); }
  const Matrix& cholesky() const { return chol_; }

  /// First row of sigma-hat at x (length fantasy_dim()).
  Vector row(const Vector& x) const;

  /// x -> mu_1(x) + row(x) . w, i.e. the posterior mean of f after the
  /// fantasy observations implied by w.
  KernelExpansion fantasy_mean(const Vector& w) const;

  /// Gradient of row(x_fixed) . w with respect to the batch locations
  /// (q*d entries, point-major) followed, in directional mode, by the raw
  /// partials with respect to theta (d entries).
  Vector row_dot_gradient(const Vector& x_fixed, const Vector& w) const;

 private:
  const GpPosterior* posterior_;
  CandidateBatch batch_;
  ObservationModel model_;
  std::vector<Index> fantasy_point_;
  std::vector<bool> fantasy_directional_;
  Matrix fantasy_functionals_;  // m x (d+1)
  Matrix cross_;                // n x m prior covariance with training channels
  Matrix solved_;               // G^{-1} cross_
  Matrix chol_;                 // m x m
  Matrix inv_chol_t_;           // D^{-T}
  Matrix all_centers_;          // d x (n+m)
  Matrix all_functionals_;      // (d+1) x (n+m)
  Matrix coeff_map_;            // (n+m) x m, coefficients of W in the expansion
};

struct InnerOptions {
  int starts = 8;
  int steps = 30;
  double learning_rate = 0.03;
  double decay = 0.7;
  /// Projected Barzilai-Borwein refinement of each start's best point.
  int polish_steps = 60;
  double polish_tolerance = 1e-12;
  /// The polish stops once the projected gradient is this small.
  double stationarity_tolerance = 1e-9;
};

struct InnerResult {
  Vector x;
  double value = 0.0;
  /// Starts abandoned because of a non-finite gradient.
  int aborted_starts = 0;
};

/// Multi-start projected gradient descent with learning rate lr/t^decay.
/// On a finite space this is exact enumeration instead.
InnerResult inner_minimize(const KernelExpansion& objective, const SearchSpace& space,
                           const std::vector<Vector>& starts, const InnerOptions& options);

/// Value with optional gradient output.
using SmoothObjective = std::function<double(const Vector&, Vector*)>;

InnerResult inner_minimize(const SmoothObjective& objective, const SearchSpace& space,
                           const std::vector<Vector>& starts, const InnerOptions& options);

/// Start points for the inner problem: starts-1 Latin-hypercube points plus
/// the minimizer of the current posterior mean.
std::vector<Vector> inner_starts(const GpPosterior& posterior, const SearchSpace& space,
                                 const InnerOptions& options, std::uint64_t seed);

/// Minimize mu_1(x) + row(x) . w.
InnerResult inner_minimize(const SigmaFactor& factor, const FantasyDraw& draw, const SearchSpace& space,
                           const InnerOptions& options, std::uint64_t seed);

/// Minimum of the posterior mean itself.
InnerResult minimize_posterior_mean(const GpPosterior& posterior, const SearchSpace& space,
                                    const std::vector<Vector>& starts, const InnerOptions& options);

/// Knowledge-gradient family estimator (d-KG when model observes
/// derivatives, batch KG when value-only).
struct KnowledgeGradient {
  ObservationModel model;
  InnerOptions inner;

  AcquisitionEstimate value(const GpPosterior& posterior, const CandidateBatch& batch,
                            const SearchSpace& space, Index num_fantasies, std::uint64_t seed) const;

  /// Per-draw values min mu - min(mu + row.W) for draws 0..num_fantasies-1.
  Vector draw_values(const GpPosterior& posterior, const CandidateBatch& batch, const SearchSpace& space,
                     Index num_fantasies, std::uint64_t seed) const;

  /// Envelope-theorem gradient for one draw: -grad_{z,theta}[row(x*(W)) . W]
  /// with x*(W) held fixed. The theta block is taken through the unit
  /// normalization, i.e. projected onto the tangent space of the sphere.
  Vector gradient(const GpPosterior& posterior, const CandidateBatch& batch, const FantasyDraw& draw,
                  const SearchSpace& space, const std::vector<Vector>& starts) const;
};

AcquisitionEstimate dkg_value(const GpPosterior& posterior, const CandidateBatch& batch,
                              const SearchSpace& space, Index num_fantasies, std::uint64_t seed,
                              const ObservationModel& model = ObservationModel::directional(),
                              const InnerOptions& inner = {});

Vector dkg_gradient(const GpPosterior& posterior, const CandidateBatch& batch, const FantasyDraw& draw,
                    const SearchSpace& space, std::uint64_t seed,
                    const ObservationModel& model = ObservationModel::directional(),
                    const InnerOptions& inner = {});

AcquisitionEstimate kg_value(const GpPosterior& posterior, const CandidateBatch& batch,
                             const SearchSpace& space, Index num_fantasies, std::uint64_t seed,
                             const InnerOptions& inner = {});

Vector kg_gradient(const GpPosterior& posterior, const CandidateBatch& batch, const FantasyDraw& draw,
                   const SearchSpace& space, std::uint64_t seed, const InnerOptions& inner = {});

/// Fantasy draw for index k of a seeded estimate; draws for different
/// fantasy dimensions share their leading entries.
FantasyDraw fantasy_draw(std::uint64_t seed, Index index, Index dim);

struct OuterOptions {
  int restarts = 8;
  int sga_steps = 50;
  /// Ten times the inner learning rate.
  double learning_rate = 0.3;
  double decay = 0.7;
  Index rerank_fantasies = 64;
  double margin = 1e-6;
};

struct AcquisitionOptions {
  ObservationModel model;
  InnerOptions inner;
  OuterOptions outer;
};

struct OuterResult {
  CandidateBatch batch;
  AcquisitionEstimate value;
};

/// Integrated acquisition: plain average over hyperparameter samples, with
/// standard errors combined in quadrature.
AcquisitionEstimate integrated_acquisition(std::span<const GpPosterior> posteriors,
                                           const CandidateBatch& batch, const SearchSpace& space,
                                           const KnowledgeGradient& kg, Index num_fantasies,
                                           std::uint64_t seed);

AcquisitionEstimate average_estimates(std::span<const AcquisitionEstimate> estimates);

/// Stochastic gradient ascent of the (integrated) KG-family acquisition over
/// batch locations and, in directional mode, theta. Candidates from every
/// restart (initial and final batch) are re-ranked with common random
/// numbers; ties go to the lowest restart index.
OuterResult outer_maximize(std::span<const GpPosterior> posteriors, const SearchSpace& space, Index q,
                           const AcquisitionOptions& options, std::uint64_t seed);

OuterResult kg_maximize(std::span<const GpPosterior> posteriors, const SearchSpace& space, Index q,
                        AcquisitionOptions options, std::uint64_t seed);

// --- Baselines ---------------------------------------------------------------

/// Smallest posterior mean of f over the evaluated locations.
double incumbent_value(const GpPosterior& posterior);

/// Closed-form expected improvement (minimization) below the incumbent.
double ei_value(const GpPosterior& posterior, const Vector& x);
double ei_value(const GpPosterior& posterior, const Vector& x, double incumbent);

/// Monte-Carlo batch expected improvement over the joint posterior of f at
/// the batch.
AcquisitionEstimate d_ei_value(const GpPosterior& posterior, const CandidateBatch& batch,
                               Index num_fantasies, std::uint64_t seed);

/// Greedy batch construction for batch EI using a candidate pool plus
/// pattern-search refinement, with common random numbers across candidates.
OuterResult ei_maximize(std::span<const GpPosterior> posteriors, const SearchSpace& space, Index q,
                        Index num_fantasies, std::uint64_t seed);

/// GP-UCB-PE: the lower-confidence-bound minimizer, then q-1 points of
/// maximal posterior variance conditioned on the pending points.
CandidateBatch ucb_pe_select(const GpPosterior& posterior, const SearchSpace& space, Index q, double beta,
                             const ObservationModel& model, std::uint64_t seed);

/// Posterior after hallucinating observations (per model) at the pending
/// points; values are set to the current mean, which leaves variances exact.
GpPosterior condition_on_pending(const GpPosterior& posterior, const std::vector<Vector>& pending,
                                 const ObservationModel& model);

}  // namespace dkg
