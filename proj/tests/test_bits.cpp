#include "lw/bits.hpp"

#include <cmath>
#include <stdexcept>

#include "framework.hpp"

using namespace lw;

TEST_CASE(random_message_deterministic) {
    const auto a = random_message(48, RngSeed{5});
    const auto b = random_message(48, RngSeed{5});
    REQUIRE(a.bits == b.bits);
}

TEST_CASE(random_message_domain) {
    const auto m = random_message(4, RngSeed{77});
    REQUIRE(m.n() == 4);
    for (auto b : m.bits) REQUIRE(b == 0 || b == 1);
}

TEST_CASE(random_message_rejects_zero_length) {
    REQUIRE_THROWS_AS(random_message(0, RngSeed{1}), std::invalid_argument);
}

TEST_CASE(random_message_mean_bit_value) {
    // 10,000 draws of n=64: the mean bit value sits inside [0.47, 0.53]; the
    // band is ~18 binomial standard errors wide, so a fair generator cannot
    // miss it by chance.
    double ones = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const auto m = random_message(64, RngSeed{seed_split(RngSeed{99}, "mean-check").value + i});
        for (auto b : m.bits) ones += b;
    }
    const double mean = ones / (10000.0 * 64.0);
    REQUIRE(mean >= 0.47 && mean <= 0.53);
}

TEST_CASE(bit_accuracy_identity_and_complement) {
    const auto m = random_message(48, RngSeed{3});
    REQUIRE(bit_accuracy(m, m) == 1.0);
    REQUIRE(bit_accuracy(m, m.complement()) == 0.0);
}

TEST_CASE(bit_accuracy_hand_count) {
    const auto a = from_bit_string("0101");
    const auto b = from_bit_string("0111");
    REQUIRE(bit_accuracy(a, b) == 0.75);
}

TEST_CASE(bit_accuracy_rejects_length_mismatch) {
    REQUIRE_THROWS_AS(bit_accuracy(from_bit_string("01"), from_bit_string("011")),
                      std::invalid_argument);
}

TEST_CASE(bit_accuracy_symmetry_and_complement_sum) {
    for (int i = 0; i < 50; ++i) {
        const auto a = random_message(56, RngSeed{1000 + static_cast<std::uint64_t>(i)});
        const auto b = random_message(56, RngSeed{2000 + static_cast<std::uint64_t>(i)});
        REQUIRE(bit_accuracy(a, b) == bit_accuracy(b, a));
        REQUIRE_CLOSE(bit_accuracy(a, b) + bit_accuracy(a, b.complement()), 1.0, 1e-12);
        if (a.bits != b.bits) REQUIRE(bit_accuracy(a, b) < 1.0);
    }
}

TEST_CASE(to_bipolar_definition) {
    const auto v = to_bipolar(from_bit_string("0101"));
    REQUIRE(v.size() == 4);
    REQUIRE(v[0] == -1.0 && v[1] == 1.0 && v[2] == -1.0 && v[3] == 1.0);
    const auto ones = to_bipolar(from_bit_string("1111"));
    for (double x : ones) REQUIRE(x == 1.0);
}

TEST_CASE(threshold_bits_definition_and_tie_break) {
    const auto m = threshold_bits({-0.9, 0.2, -0.1, 0.99});
    REQUIRE(to_bit_string(m) == "0101");
    REQUIRE(to_bit_string(threshold_bits({0.0})) == "1");
}

TEST_CASE(threshold_bits_rejects_nan) {
    REQUIRE_THROWS_AS(threshold_bits({0.1, std::nan("")}), std::invalid_argument);
}

TEST_CASE(bipolar_threshold_round_trip_exhaustive) {
    for (int n = 1; n <= 12; ++n) {
        for (std::uint32_t pattern = 0; pattern < (1u << n); ++pattern) {
            BitMessage m;
            m.bits.resize(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) m.bits[static_cast<std::size_t>(i)] = (pattern >> i) & 1u;
            REQUIRE(threshold_bits(to_bipolar(m)).bits == m.bits);
        }
    }
}

TEST_CASE(hex_round_trip) {
    const auto m = random_message(64, RngSeed{4});
    REQUIRE(from_hex(to_hex(m), 64).bits == m.bits);
    REQUIRE(parse_message("0xFF", 8).bits == from_bit_string("11111111").bits);
    REQUIRE(parse_message("0101").bits == from_bit_string("0101").bits);
}

TEST_CASE(bit_string_round_trip) {
    const auto m = random_message(48, RngSeed{6});
    REQUIRE(from_bit_string(to_bit_string(m)).bits == m.bits);
    REQUIRE_THROWS_AS(from_bit_string("012"), std::invalid_argument);
}

TEST_MAIN()
