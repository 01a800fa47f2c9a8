#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace marginbv {

// Seedable generator whose output is identical across platforms and standard
// libraries: std::mt19937_64 is fully specified, and the distributions below
// are written out rather than taken from <random>, whose distributions are
// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Seed for an independent stream, mixed from a base seed and a stream index.
    static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // floor(u * n), in [0, n).
    std::size_t index(std::size_t n) {
        auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    // Standard normal via Box-Muller; the second variate is discarded so every
    // call consumes exactly two uniforms.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) {
            u1 = 0x1.0p-53;
        }
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

}  // namespace marginbv
