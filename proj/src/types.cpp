#include "dkg/types.hpp"

#include <sstream>

namespace dkg {

Box::Box(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
  require(lower.size() == upper.size(), "Box: bound dimensions differ");
  require(lower.size() > 0, "Box: empty dimension");
  for (Index i = 0; i < lower.size(); ++i) {
    if (!(lower[i] < upper[i])) {
      std::ostringstream msg;
      msg << "Box: lower bound not below upper bound in dimension " << i;
      throw ContractViolation(msg.str());
    }
  }
}

Box Box::unit(Index dim) { return Box(Vector::Zero(dim), Vector::Ones(dim)); }

bool Box::contains(const Vector& x, double tol) const {
  if (x.size() != dim()) return false;
  for (Index i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lower[i] - tol && x[i] <= upper[i] + tol)) return false;
  }
  return true;
}

Vector Box::project(const Vector& x, double margin) const {
  Vector out(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double lo = lower[i] + margin;
    const double hi = upper[i] - margin;
    out[i] = std::min(std::max(x[i], lo), hi);
  }
  return out;
}

Vector Box::to_unit(const Vector& x) const {
  return (x - lower).cwiseQuotient(width());
}

Vector Box::from_unit(const Vector& u) const {
  return lower + u.cwiseProduct(width());
}

}  // namespace dkg
