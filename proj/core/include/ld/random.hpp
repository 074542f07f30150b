#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace ld {

using Rng = std::mt19937_64;

/// SplitMix64 mix of (root, stream). All child generators derive from one
/// root seed through this function.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream);

/// Softmax of n standard normals scaled by `sharpness`; strictly positive.
std::vector<double> random_simplex(Rng& rng, std::size_t n, double sharpness = 1.0);

}  // namespace ld
