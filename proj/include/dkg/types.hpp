#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dkg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised when a caller breaks a documented precondition (dimension
/// mismatch, non-unit direction, point outside the box, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a covariance matrix stays non-positive-definite after the
/// full jitter escalation.
class SingularModelError : public std::runtime_error {
 public:
  SingularModelError(const std::string& what, std::ptrdiff_t record_index)
      : std::runtime_error(what), record_index_(record_index) {}

  /// Index of the observation record owning the failing pivot, or -1 when
  /// the matrix is not tied to a history (e.g. a fantasy covariance).
  std::ptrdiff_t record_index() const noexcept { return record_index_; }

 private:
  std::ptrdiff_t record_index_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

/// Axis-aligned box domain.
struct Box {
  Vector lower;
  Vector upper;

  Box() = default;
  Box(Vector lo, Vector hi);

  static Box unit(Index dim);

  Index dim() const { return lower.size(); }
  Vector width() const { return upper - lower; }
  bool contains(const Vector& x, double tol = 0.0) const;
  /// Clamp into [lower + margin, upper - margin].
  Vector project(const Vector& x, double margin = 0.0) const;
  Vector to_unit(const Vector& x) const;
  Vector from_unit(const Vector& u) const;
};

}  // namespace dkg
