#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace forge {

// The one generator used everywhere a seed is accepted.
//
// std::mt19937_64 is fully specified by the standard, but the std
// distributions are not, so draws are derived here from raw 64-bit output.
// Identical seeds give identical streams on every conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// Seed for an independent substream, e.g. one bootstrap replicate.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace forge
