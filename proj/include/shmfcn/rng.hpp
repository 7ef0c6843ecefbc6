#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace shmfcn {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Order-sensitive hash of a seed and a tuple of stream identifiers. Used to
/// derive independent, reproducible streams (per instance, per load, per epoch).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = mix64(base);
    for (std::uint64_t p : parts) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
    return h;
}

inline double randn(Rng& rng, double sigma = 1.0) {
    std::normal_distribution<double> dist(0.0, sigma);
    return dist(rng);
}

}  // namespace shmfcn
