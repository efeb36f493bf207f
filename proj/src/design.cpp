#include "dkg/design.hpp"

#include <algorithm>
#include <cmath>
#include <array>
#include <numeric>

namespace dkg {

std::vector<Vector> latin_hypercube(const Box& box, Index n, Rng& rng) {
  const Index d = box.dim();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Matrix unit(d, n);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index i = 0; i < n; ++i) {
      unit(j, i) = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + uniform(rng)) /
                   static_cast<double>(n);
    }
  }
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.push_back(box.from_unit(unit.col(i)));
  return out;
}

namespace {

double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double result = 0.0;
  double f = 1.0 / static_cast<double>(base);
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= static_cast<double>(base);
  }
  return result;
}

constexpr std::array<std::uint64_t, 16> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19,
                                                   23, 29, 31, 37, 41, 43, 47, 53};

}  // namespace

std::vector<Vector> shifted_halton(const Box& box, Index n, Rng& rng) {
  const Index d = box.dim();
  require(d <= static_cast<Index>(kPrimes.size()), "shifted_halton: dimension too large");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector shift(d);
  for (Index j = 0; j < d; ++j) shift[j] = uniform(rng);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Vector u(d);
    for (Index j = 0; j < d; ++j) {
      double v = radical_inverse(static_cast<std::uint64_t>(i + 1), kPrimes[static_cast<std::size_t>(j)]) + shift[j];
      u[j] = v - std::floor(v);
    }
    out.push_back(box.from_unit(u));
  }
  return out;
}

std::vector<Vector> grid_1d(double lo, double hi, Index n) {
  require(n >= 1, "grid_1d: need at least one point");
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
    out.push_back(Vector::Constant(1, lo + t * (hi - lo)));
  }
  return out;
}

}  // namespace dkg
