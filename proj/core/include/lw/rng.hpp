#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "lw/common.hpp"

namespace lw {

// One 64-bit root seed drives every run. Sub-streams are derived with
// seed_split(root, purpose) so that "weights", "messages", "data order"
// and friends never share a stream.
struct RngSeed {
    std::uint64_t value = 0;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Derive an independent child seed from (root, purpose). FNV-1a over the
// purpose string, then one splitmix round. Stable across platforms.
RngSeed seed_split(RngSeed root, std::string_view purpose);

// xoshiro256** with splitmix64 seeding. We avoid std::normal_distribution
// and friends: their output is implementation-defined, and reports must be
// reproducible bit-for-bit anywhere.
class Rng {
public:
    Rng() : Rng(RngSeed{0x9E3779B97F4A7C15ULL}) {}
    explicit Rng(RngSeed seed);

    std::uint64_t next_u64();

    // Uniform on [0,1) with 53 random bits.
    Real uniform();
    // Uniform on [lo,hi).
    Real uniform(Real lo, Real hi);
    // Standard normal via Box-Muller (pair cached).
    Real normal();
    Real normal(Real mean, Real stddev) { return mean + stddev * normal(); }
    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);
    // Fair bit.
    int bit() { return static_cast<int>(next_u64() >> 63); }

private:
    std::array<std::uint64_t, 4> s_{};
    Real cached_normal_ = 0;
    bool has_cached_ = false;
};

}  // namespace lw
