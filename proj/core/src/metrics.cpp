#include "lw/metrics.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

namespace lw {

using boost::multiprecision::cpp_int;

namespace {

// Sum of C(n, i) for i in [k, n].
cpp_int binom_suffix_sum(int n, int k) {
    cpp_int coef = 1;  // C(n, 0)
    cpp_int sum = 0;
    for (int i = 0; i <= n; ++i) {
        if (i >= k) sum += coef;
        coef = coef * (n - i) / (i + 1);
    }
    return sum;
}

// suffix / 2^n <= target, decided in exact integer arithmetic. The double
// target is decomposed into mantissa * 2^exponent, which is exact.
bool tail_leq(const cpp_int& suffix, int n, Real target) {
    int ex = 0;
    const Real mant = std::frexp(target, &ex);
    cpp_int m(std::llround(std::ldexp(mant, 53)));
    const int shift = n + ex - 53;
    if (shift >= 0) return suffix <= (m << shift);
    return (suffix << (-shift)) <= m;
}

}  // namespace

Real binom_tail(int n, int k) {
    check_arg(n >= 1, "binom_tail: n must be positive");
    check_arg(k >= 0 && k <= n, "binom_tail: k must be in [0, n]");
    const cpp_int sum = binom_suffix_sum(n, k);
    return std::ldexp(sum.convert_to<Real>(), -n);
}

int tpr_threshold(int n, Real target_fpr) {
    check_arg(n >= 1, "tpr_threshold: n must be positive");
    check_arg(target_fpr > 0.0 && target_fpr < 1.0, "tpr_threshold: target must be in (0,1)");
    // Pascal-style suffix sums, scanning k upward; the tail is monotone
    // non-increasing in k so the first hit is minimal.
    cpp_int coef = 1;
    std::vector<cpp_int> binom(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        binom[static_cast<std::size_t>(i)] = coef;
        coef = coef * (n - i) / (i + 1);
    }
    cpp_int suffix = 0;
    for (int i = 0; i <= n; ++i) suffix += binom[static_cast<std::size_t>(i)];
    for (int k = 0; k <= n; ++k) {
        if (tail_leq(suffix, n, target_fpr)) return k;
        suffix -= binom[static_cast<std::size_t>(k)];
    }
    return n + 1;  // target below 2^-n: no count of n bits suffices
}

Real theoretical_fpr(int n, Real target_fpr) {
    const int k = tpr_threshold(n, target_fpr);
    if (k > n) return 0.0;
    return binom_tail(n, k);
}

Real tpr_at_fpr(const std::vector<int>& match_counts, int n, Real target_fpr) {
    check_arg(!match_counts.empty(), "tpr_at_fpr: empty count list");
    const int k = tpr_threshold(n, target_fpr);
    std::size_t hits = 0;
    for (int c : match_counts) {
        check_arg(c >= 0 && c <= n, "tpr_at_fpr: match count out of [0, n]");
        if (c >= k) ++hits;
    }
    return static_cast<Real>(hits) / static_cast<Real>(match_counts.size());
}

ThresholdTable ThresholdTable::for_lengths(const std::vector<int>& lengths, Real target_fpr) {
    ThresholdTable t;
    t.target_fpr = target_fpr;
    for (int n : lengths) t.rows[n] = {tpr_threshold(n, target_fpr), theoretical_fpr(n, target_fpr)};
    return t;
}

ThresholdTable ThresholdTable::standard() { return for_lengths({48, 56, 64, 128}, 0.01); }

std::string ThresholdTable::to_json() const {
    nlohmann::json j;
    j["target_fpr"] = target_fpr;
    j["rows"] = nlohmann::json::array();
    for (const auto& [n, e] : rows) {
        j["rows"].push_back({{"n", n}, {"threshold", e.threshold}, {"theoretical_fpr", e.fpr}});
    }
    return j.dump(2);
}

namespace {

constexpr int kWindow = 11;
constexpr Real kWindowSigma = 1.5;
constexpr Real kC1 = 1e-4;   // (0.01 * L)^2, L = 1
constexpr Real kC2 = 9e-4;   // (0.03 * L)^2

std::vector<Real> gaussian_window() {
    std::vector<Real> k(kWindow);
    Real sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const Real d = i - (kWindow - 1) / 2.0;
        k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Valid-region separable filtering of one {H,W} plane.
void filter_plane(const Real* src, int H, int W, const std::vector<Real>& k, std::vector<Real>& tmp,
                  Real* dst) {
    const int L = static_cast<int>(k.size());
    const int Wo = W - L + 1, Ho = H - L + 1;
    tmp.resize(static_cast<std::size_t>(H) * Wo);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < Wo; ++j) {
            Real s = 0.0;
            for (int t = 0; t < L; ++t) s += k[static_cast<std::size_t>(t)] * src[static_cast<std::size_t>(i) * W + j + t];
            tmp[static_cast<std::size_t>(i) * Wo + j] = s;
        }
    }
    for (int i = 0; i < Ho; ++i) {
        for (int j = 0; j < Wo; ++j) {
            Real s = 0.0;
            for (int t = 0; t < L; ++t) s += k[static_cast<std::size_t>(t)] * tmp[static_cast<std::size_t>(i + t) * Wo + j];
            dst[static_cast<std::size_t>(i) * Wo + j] = s;
        }
    }
}

std::vector<int> as_nchw(const Tensor& x) {
    check_arg(x.ndim() == 3 || x.ndim() == 4, "image metric: expected {C,H,W} or {N,C,H,W}");
    if (x.ndim() == 4) return x.shape;
    return {1, x.shape[0], x.shape[1], x.shape[2]};
}

}  // namespace

Real ssim(const Tensor& x, const Tensor& y) {
    check_same_shape(x, y, "ssim");
    const auto s = as_nchw(x);
    const int N = s[0], C = s[1], H = s[2], W = s[3];
    check_arg(H >= kWindow && W >= kWindow, "ssim: image smaller than the 11x11 window");
    const auto win = gaussian_window();
    const int Ho = H - kWindow + 1, Wo = W - kWindow + 1;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t oplane = static_cast<std::size_t>(Ho) * Wo;

    std::vector<Real> tmp, xy(plane), xx(plane), yy(plane);
    std::vector<Real> mx(oplane), my(oplane), mxx(oplane), myy(oplane), mxy(oplane);
    Real total = 0.0;
    for (int p = 0; p < N * C; ++p) {
        const Real* px = x.data.data() + static_cast<std::size_t>(p) * plane;
        const Real* py = y.data.data() + static_cast<std::size_t>(p) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            xy[i] = px[i] * py[i];
            xx[i] = px[i] * px[i];
            yy[i] = py[i] * py[i];
        }
        filter_plane(px, H, W, win, tmp, mx.data());
        filter_plane(py, H, W, win, tmp, my.data());
        filter_plane(xx.data(), H, W, win, tmp, mxx.data());
        filter_plane(yy.data(), H, W, win, tmp, myy.data());
        filter_plane(xy.data(), H, W, win, tmp, mxy.data());
        Real acc = 0.0;
        for (std::size_t i = 0; i < oplane; ++i) {
            const Real vx = mxx[i] - mx[i] * mx[i];
            const Real vy = myy[i] - my[i] * my[i];
            const Real cov = mxy[i] - mx[i] * my[i];
            const Real num = (2.0 * mx[i] * my[i] + kC1) * (2.0 * cov + kC2);
            const Real den = (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
            acc += num / den;
        }
        total += acc / static_cast<Real>(oplane);
    }
    return total / static_cast<Real>(N * C);
}

Real psnr(const Tensor& x, const Tensor& y) {
    check_same_shape(x, y, "psnr");
    check_arg(x.numel() > 0, "psnr: empty tensor");
    Real mse = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const Real d = x.data[i] - y.data[i];
        mse += d * d;
    }
    mse /= static_cast<Real>(x.numel());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

Real mean_abs_diff(const Tensor& x, const Tensor& y) {
    check_same_shape(x, y, "mean_abs_diff");
    check_arg(x.numel() > 0, "mean_abs_diff: empty tensor");
    Real acc = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) acc += std::fabs(x.data[i] - y.data[i]);
    return acc / static_cast<Real>(x.numel());
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["bundle_id"] = bundle_id;
    j["seed"] = seed;
    j["config_fingerprint"] = config_fingerprint;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        j["rows"].push_back({{"attack", r.attack},
                             {"attack_hash", r.attack_hash},
                             {"n_bits", r.n_bits},
                             {"samples", r.samples},
                             {"bitacc_mean", r.bitacc_mean},
                             {"tpr", r.tpr},
                             {"ssim_mean", r.ssim_mean},
                             {"psnr_mean", r.psnr_mean},
                             {"bitacc_se", r.bitacc_se},
                             {"mad_mean", r.mad_mean},
                             {"failed", r.failed}});
    }
    return j.dump(2);
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "attack,attack_hash,n_bits,samples,bitacc_mean,tpr,ssim_mean,psnr_mean,bitacc_se,"
          "mad_mean,failed\n";
    os.precision(17);
    for (const auto& r : rows) {
        os << r.attack << ',' << r.attack_hash << ',' << r.n_bits << ',' << r.samples << ','
           << r.bitacc_mean << ',' << r.tpr << ',' << r.ssim_mean << ',' << r.psnr_mean << ','
           << r.bitacc_se << ',' << r.mad_mean << ',' << r.failed << '\n';
    }
    return os.str();
}

EvalReport EvalReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    EvalReport r;
    r.bundle_id = j.at("bundle_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    for (const auto& row : j.at("rows")) {
        EvalRow e;
        e.attack = row.at("attack").get<std::string>();
        e.attack_hash = row.at("attack_hash").get<std::string>();
        e.n_bits = row.at("n_bits").get<int>();
        e.samples = row.at("samples").get<int>();
        e.bitacc_mean = row.at("bitacc_mean").get<Real>();
        e.tpr = row.at("tpr").get<Real>();
        e.ssim_mean = row.at("ssim_mean").get<Real>();
        e.psnr_mean = row.at("psnr_mean").get<Real>();
        e.bitacc_se = row.value("bitacc_se", 0.0);
        e.mad_mean = row.value("mad_mean", 0.0);
        e.failed = row.value("failed", 0);
        r.rows.push_back(std::move(e));
    }
    return r;
}

}  // namespace lw
