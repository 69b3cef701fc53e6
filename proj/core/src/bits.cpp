#include "lw/bits.hpp"

#include <cmath>

namespace lw {

BitMessage::BitMessage(std::vector<std::uint8_t> b) : bits(std::move(b)) {
    for (auto v : bits) check_arg(v == 0 || v == 1, "BitMessage: elements must be 0 or 1");
}

BitMessage BitMessage::complement() const {
    BitMessage out;
    out.bits.reserve(bits.size());
    for (auto v : bits) out.bits.push_back(static_cast<std::uint8_t>(1 - v));
    return out;
}

BitMessage random_message(int n, RngSeed seed) {
    check_arg(n >= 1, "random_message: n must be >= 1");
    Rng rng(seed);
    BitMessage m;
    m.bits.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) m.bits.push_back(static_cast<std::uint8_t>(rng.bit()));
    return m;
}

Real bit_accuracy(const BitMessage& a, const BitMessage& b) {
    check_arg(a.n() == b.n() && a.n() > 0, "bit_accuracy: length mismatch");
    return static_cast<Real>(matched_bits(a, b)) / static_cast<Real>(a.n());
}

int matched_bits(const BitMessage& a, const BitMessage& b) {
    check_arg(a.n() == b.n(), "matched_bits: length mismatch");
    int m = 0;
    for (int i = 0; i < a.n(); ++i) m += (a.bits[i] == b.bits[i]);
    return m;
}

std::vector<Real> to_bipolar(const BitMessage& m) {
    std::vector<Real> out(m.bits.size());
    for (std::size_t i = 0; i < m.bits.size(); ++i) out[i] = m.bits[i] ? 1.0 : -1.0;
    return out;
}

BitMessage threshold_bits(const std::vector<Real>& logits) {
    BitMessage out;
    out.bits.reserve(logits.size());
    for (Real v : logits) {
        check_arg(!std::isnan(v), "threshold_bits: NaN logit");
        out.bits.push_back(static_cast<std::uint8_t>(v >= 0 ? 1 : 0));
    }
    return out;
}

std::string to_bit_string(const BitMessage& m) {
    std::string s;
    s.reserve(m.bits.size());
    for (auto v : m.bits) s.push_back(v ? '1' : '0');
    return s;
}

BitMessage from_bit_string(const std::string& s) {
    BitMessage m;
    m.bits.reserve(s.size());
    for (char c : s) {
        check_arg(c == '0' || c == '1', "from_bit_string: invalid character");
        m.bits.push_back(static_cast<std::uint8_t>(c - '0'));
    }
    check_arg(!m.bits.empty(), "from_bit_string: empty message");
    return m;
}

static char nibble_to_hex(int v) { return v < 10 ? static_cast<char>('0' + v) : static_cast<char>('a' + v - 10); }

static int hex_to_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("from_hex: invalid hex digit");
}

std::string to_hex(const BitMessage& m) {
    check_arg(m.n() % 4 == 0, "to_hex: bit length must be a multiple of 4");
    std::string s;
    s.reserve(static_cast<std::size_t>(m.n() / 4));
    for (int i = 0; i < m.n(); i += 4) {
        int v = (m.bits[i] << 3) | (m.bits[i + 1] << 2) | (m.bits[i + 2] << 1) | m.bits[i + 3];
        s.push_back(nibble_to_hex(v));
    }
    return s;
}

BitMessage from_hex(const std::string& s, int n) {
    std::string body = s;
    if (body.rfind("0x", 0) == 0 || body.rfind("0X", 0) == 0) body = body.substr(2);
    check_arg(!body.empty(), "from_hex: empty string");
    check_arg(n == static_cast<int>(body.size()) * 4, "from_hex: hex length does not match n");
    BitMessage m;
    m.bits.reserve(static_cast<std::size_t>(n));
    for (char c : body) {
        int v = hex_to_nibble(c);
        m.bits.push_back(static_cast<std::uint8_t>((v >> 3) & 1));
        m.bits.push_back(static_cast<std::uint8_t>((v >> 2) & 1));
        m.bits.push_back(static_cast<std::uint8_t>((v >> 1) & 1));
        m.bits.push_back(static_cast<std::uint8_t>(v & 1));
    }
    return m;
}

BitMessage parse_message(const std::string& s, int n_hint) {
    if (s.rfind("0x", 0) == 0 || s.rfind("0X", 0) == 0) {
        int n = n_hint > 0 ? n_hint : static_cast<int>(s.size() - 2) * 4;
        return from_hex(s, n);
    }
    BitMessage m = from_bit_string(s);
    if (n_hint > 0) check_arg(m.n() == n_hint, "parse_message: length does not match expected n");
    return m;
}

}  // namespace lw
