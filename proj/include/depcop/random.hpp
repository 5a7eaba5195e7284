#pragma once

#include <cstdint>
#include <random>

#include "depcop/normal.hpp"

namespace depcop {

using Rng = std::mt19937_64;

/// Derives the seed of an independent substream from a base seed and a stream
/// index (splitmix64 finalizer). Parallel work items seed their own generator
/// with derive_seed(seed, index) so results never depend on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng(derive_seed(seed, stream));
}

/// Uniform on [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform on the open interval (0, 1).
inline double uniform_open01(Rng& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

/// Standard normal by inversion, so draws do not depend on the standard
/// library's distribution implementations.
inline double standard_normal(Rng& rng) { return normal_quantile(uniform_open01(rng)); }

}  // namespace depcop
