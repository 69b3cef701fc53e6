#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lw/tensor.hpp"

namespace lw {

// P(X >= k) for X ~ Binomial(n, 1/2), evaluated by exact integer binomial
// sums scaled by 2^-n; floating point only at the final conversion.
Real binom_tail(int n, int k);

// Minimal k with binom_tail(n, k) <= target_fpr. The comparison is carried
// out in exact integer arithmetic against the binary expansion of the target,
// so the result never depends on floating-point rounding.
int tpr_threshold(int n, Real target_fpr = 0.01);

// binom_tail(n, tpr_threshold(n, target_fpr)).
Real theoretical_fpr(int n, Real target_fpr = 0.01);

// Fraction of match counts that clear the identification threshold.
Real tpr_at_fpr(const std::vector<int>& match_counts, int n, Real target_fpr = 0.01);

struct ThresholdEntry {
    int threshold;
    Real fpr;
};

struct ThresholdTable {
    Real target_fpr = 0.01;
    std::map<int, ThresholdEntry> rows;

    static ThresholdTable for_lengths(const std::vector<int>& lengths, Real target_fpr = 0.01);
    // The four payload sizes every report covers by default.
    static ThresholdTable standard();
    std::string to_json() const;
};

// Windowed SSIM over an 11x11 Gaussian window (sigma 1.5), valid region,
// stability constants for unit dynamic range, averaged over channels.
// Accepts {C,H,W} or {N,C,H,W}; H and W must be at least the window size.
Real ssim(const Tensor& x, const Tensor& y);

// Peak 1.0. Identical images report the cap instead of infinity, and any
// value above the cap clips to it.
inline constexpr Real kPsnrCap = 99.0;
Real psnr(const Tensor& x, const Tensor& y);

Real mean_abs_diff(const Tensor& x, const Tensor& y);

struct EvalRow {
    std::string attack;
    std::string attack_hash;
    int n_bits = 0;
    int samples = 0;
    Real bitacc_mean = 0.0;
    Real tpr = 0.0;
    Real ssim_mean = 0.0;
    Real psnr_mean = 0.0;
    Real bitacc_se = 0.0;
    Real mad_mean = 0.0;
    int failed = 0;  // images excluded from the aggregates
};

struct EvalReport {
    std::string bundle_id;
    std::uint64_t seed = 0;
    std::string config_fingerprint;
    std::vector<EvalRow> rows;

    std::string to_json() const;
    std::string to_csv() const;
    static EvalReport from_json(const std::string& text);
};

}  // namespace lw
