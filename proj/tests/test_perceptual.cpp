#include "lw/perceptual.hpp"

#include <cmath>

#include "framework.hpp"
#include "gradcheck.hpp"
#include "lw/rng.hpp"

using namespace lw;

namespace {

Tensor smooth_image(int h, int w, Real phase) {
    Tensor x({1, 3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                x.data[static_cast<std::size_t>((c * h + i) * w + j)] =
                    0.5 + 0.4 * std::sin(0.5 * i + 0.3 * j + phase + c);
    return x;
}

Tensor add_noise(const Tensor& x, Real sigma, RngSeed seed) {
    Rng rng(seed);
    Tensor y = x;
    for (auto& v : y.data) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
    return y;
}

}  // namespace

TEST_CASE(identical_images_score_one_and_loss_zero) {
    const Tensor x = smooth_image(16, 16, 0.0);
    const auto s = ssim_index_var(ag::constant(x), ag::constant(x));
    REQUIRE_CLOSE(s->val.data[0], 1.0, 1e-12);
    const auto loss = perceptual_loss_default(ag::constant(x), ag::constant(x));
    REQUIRE(std::fabs(loss->val.data[0]) <= 1e-12);
}

TEST_CASE(similarity_is_symmetric) {
    const Tensor a = smooth_image(16, 16, 0.0);
    const Tensor b = add_noise(a, 0.1, RngSeed{5});
    const auto ab = ssim_index_var(ag::constant(a), ag::constant(b));
    const auto ba = ssim_index_var(ag::constant(b), ag::constant(a));
    REQUIRE(ab->val.data[0] == ba->val.data[0]);
}

TEST_CASE(heavier_degradation_scores_worse) {
    const Tensor x = smooth_image(24, 24, 1.0);
    const auto loss_at = [&](Real sigma) {
        return perceptual_loss_default(ag::constant(x),
                                       ag::constant(add_noise(x, sigma, RngSeed{9})))
            ->val.data[0];
    };
    const Real l_small = loss_at(0.05), l_mid = loss_at(0.15), l_big = loss_at(0.4);
    REQUIRE(l_small > 0.0);
    REQUIRE(l_small < l_mid);
    REQUIRE(l_mid < l_big);
}

TEST_CASE(octaves_below_the_window_are_dropped) {
    const Tensor a = smooth_image(16, 16, 0.0);
    const Tensor b = add_noise(a, 0.1, RngSeed{3});
    const auto multi = ms_ssim_var(ag::constant(a), ag::constant(b), 3);
    const auto single = ssim_index_var(ag::constant(a), ag::constant(b));
    REQUIRE(multi->val.data[0] == single->val.data[0]);

    const Tensor a3 = smooth_image(48, 48, 0.0);
    const Tensor b3 = add_noise(a3, 0.1, RngSeed{3});
    const auto deep = ms_ssim_var(ag::constant(a3), ag::constant(b3), 3);
    REQUIRE(deep->val.data[0] > 0.0 && deep->val.data[0] < 1.0);
    REQUIRE(deep->val.data[0] != ssim_index_var(ag::constant(a3), ag::constant(b3))->val.data[0]);
}

TEST_CASE(images_smaller_than_the_window_are_rejected) {
    const Tensor tiny = smooth_image(8, 8, 0.0);
    REQUIRE_THROWS_AS(ssim_index_var(ag::constant(tiny), ag::constant(tiny)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(ms_ssim_var(ag::constant(tiny), ag::constant(tiny), 3),
                      std::invalid_argument);
}

TEST_CASE(default_loss_gradient_matches_finite_differences) {
    Rng rng(RngSeed{21});
    const Tensor a = gradcheck::random_tensor({1, 3, 12, 12}, rng, 0.1, 0.9);
    const Tensor b = gradcheck::random_tensor({1, 3, 12, 12}, rng, 0.1, 0.9);
    const double err = gradcheck::max_rel_err(
        [](const std::vector<ag::Var>& in) { return perceptual_loss_default(in[0], in[1]); },
        {a, b});
    REQUIRE(err < 1e-3);
}

TEST_MAIN()
