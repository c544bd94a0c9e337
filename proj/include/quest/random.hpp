#pragma once

#include <cstdint>
#include <random>

#include "quest/hashing.hpp"

namespace quest {

/// Seeded random stream with portable draws: std::mt19937_64 plus local
/// distributions, identical across standard libraries.
class RandomSource
{
public:
    explicit RandomSource(std::uint64_t seed) : engine_(mix64(seed)) {}

    /// Stream for item `index` of a run: seeded with run_seed XOR index.
    static RandomSource for_item(std::uint64_t run_seed, std::uint64_t index)
    {
        return RandomSource(run_seed ^ index);
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n). Requires n > 0.
    std::uint64_t uniform_index(std::uint64_t n)
    {
        // rejection sampling removes modulo bias
        std::uint64_t const limit = UINT64_MAX - (UINT64_MAX % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform real in [0, 1) with 53 random bits.
    double uniform_real() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

} // namespace quest
