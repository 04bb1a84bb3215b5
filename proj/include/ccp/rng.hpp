#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ccp {

// All randomness in an experiment flows from one master seed through named
// sub-streams, so perturbing e.g. the sampler leaves data generation intact.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name) {
    return std::mt19937_64(splitmix64(seed ^ fnv1a(name)));
}

// Unbiased index draw in [0, n); avoids distribution objects so the byte
// stream consumed per draw is fixed.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

inline double uniform_unit(std::mt19937_64& rng) {
    return (rng() >> 11) * 0x1.0p-53;
}

// Box-Muller, one deviate per call (the spare is discarded to keep stream
// consumption per call constant).
inline double normal(std::mt19937_64& rng) {
    double u1 = uniform_unit(rng);
    double u2 = uniform_unit(rng);
    while (u1 <= 0.0) u1 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace ccp
