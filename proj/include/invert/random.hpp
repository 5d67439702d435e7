#pragma once

// Portable random streams for synthetic fixtures.
//
// Every stream is a std::mt19937_64 (whose output sequence is fixed by the
// standard) seeded with stream_seed(seed, tag, index), where
//
//   splitmix(x) = the SplitMix64 finalizer of x + 0x9e3779b97f4a7c15
//   stream_seed(seed, tag, index) = splitmix(splitmix(seed ^ tag) ^ index)
//
// Uniforms take the top 53 bits of a draw; normals use Box-Muller with one
// cosine branch per pair of uniforms. Nothing depends on the standard
// library's distribution classes, whose output is implementation-defined.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace invert {

namespace stream {
inline constexpr std::uint64_t concept_column = 1;
inline constexpr std::uint64_t neuron_column = 2;
inline constexpr std::uint64_t planting = 3;
inline constexpr std::uint64_t reference_set = 4;
inline constexpr std::uint64_t trials = 5;
} // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
    return splitmix64(splitmix64(seed ^ tag) ^ index);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) : engine_(stream_seed(seed, tag, index)) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n), unbiased by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    // k distinct values of [0, n) in draw order (partial Fisher-Yates).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + below(n - i)]);
        pool.resize(k);
        return pool;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace invert
