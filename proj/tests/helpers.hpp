#pragma once

#include <random>
#include <vector>

#include "dkg/kernel.hpp"
#include "dkg/observation.hpp"
#include "dkg/rng.hpp"

namespace testing_support {

using dkg::Index;
using dkg::Vector;

inline Vector uniform(std::mt19937_64& rng, Index d, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector x(d);
  for (Index i = 0; i < d; ++i) x[i] = u(rng);
  return x;
}

/// Random record with a random subset of value/partials/directional channels.
inline dkg::ObservationRecord random_record(std::mt19937_64& rng, Index d) {
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> gauss;
  dkg::ObservationRecord rec;
  rec.location = uniform(rng, d);
  if (coin(rng)) rec.value = gauss(rng);
  if (coin(rng)) {
    rec.partials.resize(static_cast<std::size_t>(d));
    for (auto& p : rec.partials) {
      if (coin(rng)) p = gauss(rng);
    }
  }
  if (coin(rng)) {
    dkg::Rng r2(rng());
    rec.directional = dkg::DirectionalObservation{dkg::random_direction(r2, d), gauss(rng)};
  }
  if (rec.channel_count() == 0) rec.value = gauss(rng);
  return rec;
}

inline dkg::KernelSpec random_kernel(std::mt19937_64& rng, Index d, bool noisy = true) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector lengths(d);
  for (Index i = 0; i < d; ++i) lengths[i] = 0.2 + 0.6 * u(rng);
  Vector noise(d + 1);
  for (Index i = 0; i <= d; ++i) noise[i] = noisy ? 0.01 + 0.1 * u(rng) : 0.0;
  return dkg::KernelSpec(0.5 + u(rng), lengths, noise);
}

}  // namespace testing_support
