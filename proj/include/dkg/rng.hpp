#pragma once

#include <cstdint>
#include <random>

#include "dkg/types.hpp"

namespace dkg {

using Rng = std::mt19937_64;

// Every random quantity is drawn from a stream derived from (seed, stream tag,
// index...). Derivation is a SplitMix64 chain, so streams are independent of
// evaluation order and of how work is split between threads.
enum class Stream : std::uint64_t {
  kFantasy = 1,
  kInnerStarts = 2,
  kOuterInit = 3,
  kOuterStep = 4,
  kRerank = 5,
  kHyper = 6,
  kDesign = 7,
  kNoise = 8,
  kDirection = 9,
  kReplication = 10,
  kPool = 11,
  kScenario = 12,
};

std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0);

Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0);

Vector standard_normal(Rng& rng, Index n);

/// Uniform draw on the unit sphere in R^d.
Vector random_direction(Rng& rng, Index d);

}  // namespace dkg
