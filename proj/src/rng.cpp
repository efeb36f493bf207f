#include "dkg/rng.hpp"

namespace dkg {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
  h = splitmix64(h ^ a);
  return splitmix64(h ^ (b * 0x2545f4914f6cdd1dULL));
}

Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b) {
  return Rng(derive_seed(seed, stream, a, b));
}

Vector standard_normal(Rng& rng, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector out(n);
  for (Index i = 0; i < n; ++i) out[i] = normal(rng);
  return out;
}

Vector random_direction(Rng& rng, Index d) {
  Vector v = standard_normal(rng, d);
  double norm = v.norm();
  while (norm < 1e-12) {
    v = standard_normal(rng, d);
    norm = v.norm();
  }
  return v / norm;
}

}  // namespace dkg
