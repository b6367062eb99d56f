// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "flowmotion/tensor.hpp"

namespace flowmotion {

/// Deterministic (seed, stream) RNG. The generator is std::mt19937_64 (whose
/// output sequence is pinned by the standard) seeded through splitmix64, and
/// normals come from an explicit Box-Muller transform, NOT from
/// std::normal_distribution — the latter is implementation-defined and would
/// break golden traces across standard libraries.
///
/// Identical (seed, stream) pairs give identical sample sequences; distinct
/// stream ids give statistically independent sequences. One instance per
/// owner; hand each concurrent task its own stream id.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {
        std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        std::seed_seq seq{splitmix64(x), splitmix64(x), splitmix64(x),
                          splitmix64(x)};
        engine_.seed(seq);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0,1), 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; generates pairs, caches the spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so log(u1) is finite.
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    float normalf() { return static_cast<float>(normal()); }

private:
    static std::uint64_t splitmix64(std::uint64_t& state) {
        state += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// i.i.d. standard-normal tensor, filled row-major.
inline LatentTensor sample_gaussian(Shape4 shape, SeededRng& rng) {
    LatentTensor out(shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = rng.normalf();
    return out;
}

}  // namespace flowmotion
