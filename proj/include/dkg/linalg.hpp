#pragma once

#include "dkg/types.hpp"

namespace dkg {

/// Lower Cholesky factor of a + jitter*I.
struct JitteredCholesky {
  Matrix lower;
  double jitter = 0.0;
};

/// Raised by jittered_cholesky; carries the first failing pivot row of the
/// last attempt so callers can map it to whatever owns that row.
class CholeskyFailure : public SingularModelError {
 public:
  CholeskyFailure(const std::string& what, std::ptrdiff_t row) : SingularModelError(what, -1), row_(row) {}
  std::ptrdiff_t row() const noexcept { return row_; }

 private:
  std::ptrdiff_t row_;
};

// Jitter schedule: first try without jitter; then add 1e-10*scale to the
// diagonal and escalate by x10 up to 1e-4*scale. scale is the mean diagonal,
// floored at reference_scale (useful for posterior covariances whose
// diagonal can legitimately be ~0).
inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;

JitteredCholesky jittered_cholesky(const Matrix& a, double reference_scale = 0.0);

/// Solve L L^T x = b given the lower factor.
Matrix cholesky_solve(const Matrix& lower, const Matrix& b);
Vector cholesky_solve(const Matrix& lower, const Vector& b);

/// log det(L L^T).
double cholesky_log_det(const Matrix& lower);

}  // namespace dkg
