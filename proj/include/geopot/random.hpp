#pragma once

#include <cstdint>
#include <functional>
#include <random>

#include "geopot/core.hpp"

namespace geopot {

using Rng = std::mt19937_64;

/// Independent stream for replicate `index` under a master seed
/// (SplitMix64 scrambling of the pair).
Rng make_stream(std::uint64_t seed, std::uint64_t index);

/// Child seed for replicate `index`, for APIs that take a seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Vector of iid standard normal draws.
Vector standard_normal(Rng& rng, Index n);

/// Thread count from GEOPOT_THREADS when set, else `requested`; 0 means
/// hardware concurrency. Always >= 1.
unsigned resolve_threads(unsigned requested);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
/// written by index; the first exception thrown is rethrown after joining.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace geopot
