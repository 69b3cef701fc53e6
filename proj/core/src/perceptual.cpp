#include "lw/perceptual.hpp"

#include <cmath>

#include "lw/common.hpp"

namespace lw {

namespace {

constexpr int kWindow = 11;
constexpr Real kWindowSigma = 1.5;
constexpr Real kC1 = 1e-4, kC2 = 9e-4;

std::vector<Real> ssim_window() {
    std::vector<Real> taps(kWindow);
    Real sum = 0.0;
    for (int k = 0; k < kWindow; ++k) {
        const Real d = k - (kWindow - 1) / 2.0;
        taps[static_cast<std::size_t>(k)] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
        sum += taps[static_cast<std::size_t>(k)];
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

}  // namespace

ag::Var ssim_index_var(const ag::Var& a, const ag::Var& b) {
    check_same_shape(a->val, b->val, "ssim");
    check_arg(a->val.ndim() == 4, "ssim: expected {B,C,H,W}");
    check_arg(a->val.dim(2) >= kWindow && a->val.dim(3) >= kWindow,
              "ssim: image smaller than the 11x11 window");
    static const std::vector<Real> win = ssim_window();

    const auto mu_a = ag::sep_filter2d_valid(a, win);
    const auto mu_b = ag::sep_filter2d_valid(b, win);
    const auto var_a = ag::sub(ag::sep_filter2d_valid(ag::square(a), win), ag::square(mu_a));
    const auto var_b = ag::sub(ag::sep_filter2d_valid(ag::square(b), win), ag::square(mu_b));
    const auto cov = ag::sub(ag::sep_filter2d_valid(ag::mul(a, b), win), ag::mul(mu_a, mu_b));

    const auto num = ag::mul(ag::add_scalar(ag::scale(ag::mul(mu_a, mu_b), 2.0), kC1),
                             ag::add_scalar(ag::scale(cov, 2.0), kC2));
    const auto den = ag::mul(ag::add_scalar(ag::add(ag::square(mu_a), ag::square(mu_b)), kC1),
                             ag::add_scalar(ag::add(var_a, var_b), kC2));
    return ag::mean_all(ag::div(num, den));
}

ag::Var ms_ssim_var(const ag::Var& a, const ag::Var& b, int max_scales) {
    check_arg(max_scales >= 1, "ms_ssim: need at least one scale");
    ag::Var xa = a, xb = b;
    ag::Var acc;
    int used = 0;
    for (int s = 0; s < max_scales; ++s) {
        if (xa->val.dim(2) < kWindow || xa->val.dim(3) < kWindow) break;
        const auto scale_ssim = ssim_index_var(xa, xb);
        acc = acc ? ag::add(acc, scale_ssim) : scale_ssim;
        ++used;
        if (s + 1 < max_scales && xa->val.dim(2) % 2 == 0 && xa->val.dim(3) % 2 == 0) {
            xa = ag::avg_pool2d(xa);
            xb = ag::avg_pool2d(xb);
        } else if (s + 1 < max_scales) {
            break;
        }
    }
    check_arg(used >= 1, "ms_ssim: image smaller than the 11x11 window");
    return ag::scale(acc, 1.0 / used);
}

ag::Var perceptual_loss_default(const ag::Var& a, const ag::Var& b) {
    return ag::add_scalar(ag::neg(ms_ssim_var(a, b)), 1.0);
}

PerceptualFn default_perceptual() {
    return [](const ag::Var& a, const ag::Var& b) { return perceptual_loss_default(a, b); };
}

}  // namespace lw
