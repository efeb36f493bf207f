#include "dkg/linalg.hpp"

#include <cmath>
#include <sstream>

namespace dkg {

namespace {

// Unblocked factorization used to locate the failing pivot. Returns -1 on
// success.
std::ptrdiff_t failing_pivot(const Matrix& a) {
  const Index n = a.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    double diag = a(j, j) - l.row(j).head(j).squaredNorm();
    if (!(diag > 0.0) || !std::isfinite(diag)) return j;
    l(j, j) = std::sqrt(diag);
    for (Index i = j + 1; i < n; ++i) {
      l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return -1;
}

bool try_factor(const Matrix& a, Matrix& lower) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  for (Index i = 0; i < lower.rows(); ++i) {
    if (!(lower(i, i) > 0.0) || !std::isfinite(lower(i, i))) return false;
  }
  return true;
}

}  // namespace

JitteredCholesky jittered_cholesky(const Matrix& a, double reference_scale) {
  require(a.rows() == a.cols(), "jittered_cholesky: matrix must be square");
  JitteredCholesky out;
  const Index n = a.rows();
  if (n == 0) return out;
  if (!a.allFinite()) throw CholeskyFailure("jittered_cholesky: non-finite matrix entries", 0);
  if (try_factor(a, out.lower)) return out;

  const double scale = std::max(a.diagonal().mean(), reference_scale);
  Matrix shifted = a;
  for (double rel = kJitterStart; rel <= kJitterMax * 1.0000001; rel *= 10.0) {
    const double jitter = rel * scale;
    shifted.diagonal() = a.diagonal().array() + jitter;
    if (scale > 0.0 && try_factor(shifted, out.lower)) {
      out.jitter = jitter;
      return out;
    }
  }
  const std::ptrdiff_t row = failing_pivot(shifted);
  std::ostringstream msg;
  msg << "covariance matrix not positive definite after jitter up to " << kJitterMax
      << " x mean diagonal (failing row " << row << ")";
  throw CholeskyFailure(msg.str(), row < 0 ? 0 : row);
}

Matrix cholesky_solve(const Matrix& lower, const Matrix& b) {
  Matrix y = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

Vector cholesky_solve(const Matrix& lower, const Vector& b) {
  Vector y = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

double cholesky_log_det(const Matrix& lower) {
  return 2.0 * lower.diagonal().array().log().sum();
}

}  // namespace dkg
