#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lw/common.hpp"
#include "lw/rng.hpp"

namespace lw {

// An n-bit identity payload. Bits are {0,1} at the API surface; losses and
// decoder targets use the bipolar {-1,+1} mapping so the sign threshold at 0
// sits between the two classes instead of on one of them.
struct BitMessage {
    std::vector<std::uint8_t> bits;

    BitMessage() = default;
    explicit BitMessage(std::vector<std::uint8_t> b);

    int n() const { return static_cast<int>(bits.size()); }
    BitMessage complement() const;
    bool operator==(const BitMessage& other) const { return bits == other.bits; }
};

// n i.i.d. fair bits, deterministic in the seed.
BitMessage random_message(int n, RngSeed seed);

// Fraction of positions where the two messages agree.
Real bit_accuracy(const BitMessage& a, const BitMessage& b);

// Matched-bit count, the statistic the identification threshold is applied to.
int matched_bits(const BitMessage& a, const BitMessage& b);

// 0 -> -1, 1 -> +1.
std::vector<Real> to_bipolar(const BitMessage& m);

// Sign threshold at 0. An exact 0 maps to bit 1; the reference text defines
// only strict > and <, so the tie-break is ours and is pinned by tests.
BitMessage threshold_bits(const std::vector<Real>& logits);

// '0'/'1' ASCII round-trip (report format).
std::string to_bit_string(const BitMessage& m);
BitMessage from_bit_string(const std::string& s);

// Hex form used in CLI result records. Bit 0 is the MSB of the first nibble;
// n must be a multiple of 4 for the hex form.
std::string to_hex(const BitMessage& m);
BitMessage from_hex(const std::string& s, int n);

// Accepts either a '0'/'1' string or a 0x-prefixed hex string.
BitMessage parse_message(const std::string& s, int n_hint = -1);

}  // namespace lw
