#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace rfvar {

// SplitMix64 finalizer. Scrambles a 64-bit state into a well-mixed output.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Seed for the index-th child stream of a base seed. Children of distinct
// (base, index) pairs are decorrelated, so per-tree / per-replicate engines
// can be constructed independently in any order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return mix64(base ^ mix64(index + 0x632BE59BD9B4E019ull));
}

// Unbiased draw from {0, ..., bound-1} by rejection. bound >= 1.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t bound) {
    const std::uint64_t b = static_cast<std::uint64_t>(bound);
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() -
        std::numeric_limits<std::uint64_t>::max() % b;
    std::uint64_t v = rng();
    while (v >= limit) {
        v = rng();
    }
    return static_cast<std::size_t>(v % b);
}

// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform_unit(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// One N(0,1) draw via Box-Muller. Consumes exactly two engine outputs and
// keeps no cached spare, so the stream position is a pure function of the
// number of calls.
inline double standard_normal(std::mt19937_64& rng) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    const double u1 = 1.0 - uniform_unit(rng); // in (0, 1], log is safe
    const double u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

// k distinct indices from {0, ..., n-1} (partial Fisher-Yates), sorted.
inline std::vector<std::uint32_t> sample_without_replacement(std::mt19937_64& rng,
                                                             std::size_t n,
                                                             std::size_t k) {
    std::vector<std::uint32_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0u);
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + uniform_index(rng, n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

// k independent uniform draws from {0, ..., n-1}, sorted, repeats kept.
inline std::vector<std::uint32_t> sample_with_replacement(std::mt19937_64& rng,
                                                          std::size_t n,
                                                          std::size_t k) {
    std::vector<std::uint32_t> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        out[i] = static_cast<std::uint32_t>(uniform_index(rng, n));
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace rfvar
