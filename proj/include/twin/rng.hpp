#pragma once

#include <cstdint>
#include <random>

namespace twin {

/// splitmix64 finalizer; used to derive independent stream keys.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based stream: a generator keyed by (seed, stream index).
/// Streams with distinct keys are independent, so datasets are
/// order-independent and partially regenerable.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(mix64(mix64(seed) ^ mix64(index + 0x1234567ULL)));
}

/// Uniform double in [lo, hi].
inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(g);
}

/// Standard normal draw.
inline double normal(std::mt19937_64& g) {
    return std::normal_distribution<double>(0.0, 1.0)(g);
}

}  // namespace twin
