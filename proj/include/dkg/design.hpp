#pragma once

#include <vector>

#include "dkg/rng.hpp"
#include "dkg/types.hpp"

namespace dkg {

/// n points of a Latin hypercube in the box.
std::vector<Vector> latin_hypercube(const Box& box, Index n, Rng& rng);

/// Halton sequence with a random Cranley-Patterson shift, mapped into the box.
std::vector<Vector> shifted_halton(const Box& box, Index n, Rng& rng);

/// Uniform grid of n points on [lo, hi] (1-d helper).
std::vector<Vector> grid_1d(double lo, double hi, Index n);

}  // namespace dkg
