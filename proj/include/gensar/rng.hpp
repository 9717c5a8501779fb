#pragma once

#include <cstdint>
#include <random>

namespace gensar {

// splitmix64; used to derive independent per-component seeds from one
// pipeline seed without correlated streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

template <typename T>
inline T uniform_real(Rng& rng, T lo, T hi) {
    std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                                static_cast<double>(hi));
    return static_cast<T>(dist(rng));
}

template <typename T>
inline T normal(Rng& rng, T mean, T stddev) {
    std::normal_distribution<double> dist(static_cast<double>(mean),
                                          static_cast<double>(stddev));
    return static_cast<T>(dist(rng));
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    return dist(rng);
}

}  // namespace gensar
