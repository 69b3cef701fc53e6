#include "lw/attacks.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "framework.hpp"
#include "lw/dataset.hpp"
#include "lw/metrics.hpp"

using namespace lw;

namespace {

Tensor smooth_image(int h, int w, std::uint64_t seed) {
    Rng rng(RngSeed{seed});
    Tensor t({3, h, w});
    const Real fx = rng.uniform(1.0, 3.0), fy = rng.uniform(1.0, 3.0);
    for (int c = 0; c < 3; ++c) {
        const Real off = rng.uniform();
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                t.data[(static_cast<std::size_t>(c) * h + i) * w + j] =
                    0.5 + 0.4 * std::sin(off + fx * i / static_cast<Real>(h) * 6.28 +
                                         fy * j / static_cast<Real>(w) * 6.28);
    }
    clamp01(t);
    return t;
}

void require_valid_image(const Tensor& x, const std::vector<int>& shape) {
    REQUIRE(x.shape == shape);
    for (Real v : x.data) REQUIRE(v >= 0.0 && v <= 1.0);
}

}  // namespace

TEST_CASE(kind_names_round_trip) {
    const auto suite = default_attack_suite();
    REQUIRE(suite.size() == 10);
    int destructive = 0, constructive = 0, reconstructive = 0;
    for (const auto& spec : suite) {
        REQUIRE(attack_kind_from_string(to_string(spec.kind)) == spec.kind);
        switch (attack_category(spec.kind)) {
            case AttackCategory::kDestructive: ++destructive; break;
            case AttackCategory::kConstructive: ++constructive; break;
            case AttackCategory::kReconstructive: ++reconstructive; break;
        }
    }
    REQUIRE(destructive == 5);
    REQUIRE(constructive == 2);
    REQUIRE(reconstructive == 3);
    REQUIRE_THROWS_AS(attack_kind_from_string("unsharp_mask"), std::invalid_argument);
}

TEST_CASE(brightness_examples) {
    const Tensor x = smooth_image(16, 16, 1);
    REQUIRE(attack_brightness(x, 1.0).data == x.data);
    for (Real v : attack_brightness(x, 0.0).data) REQUIRE(v == 0.0);
    const Tensor half({3, 8, 8}, 0.5);
    for (Real v : attack_brightness(half, 0.1).data) REQUIRE_CLOSE(v, 0.05, 1e-12);
    REQUIRE_THROWS_AS(attack_brightness(x, -0.1), std::invalid_argument);
}

TEST_CASE(contrast_examples) {
    const Tensor x = smooth_image(16, 16, 2);
    const Tensor same = attack_contrast(x, 1.0);
    for (std::size_t i = 0; i < x.data.size(); ++i) REQUIRE_CLOSE(same.data[i], x.data[i], 1e-12);

    // Half the pixels at 0.1, half at 0.9 (equal channels) puts the mean
    // luminance at exactly 0.5; a 0.9 pixel lands on 0.5 + 0.1*0.4 = 0.54.
    Tensor bi({3, 2, 2});
    for (int c = 0; c < 3; ++c) {
        bi.data[static_cast<std::size_t>(c) * 4 + 0] = 0.1;
        bi.data[static_cast<std::size_t>(c) * 4 + 1] = 0.9;
        bi.data[static_cast<std::size_t>(c) * 4 + 2] = 0.9;
        bi.data[static_cast<std::size_t>(c) * 4 + 3] = 0.1;
    }
    const Tensor out = attack_contrast(bi, 0.1);
    REQUIRE_CLOSE(out.data[1], 0.54, 1e-12);
    REQUIRE_CLOSE(out.data[0], 0.46, 1e-12);

    const Tensor flat = attack_contrast(x, 0.0);
    const Real mu = gray_mean(x);
    for (Real v : flat.data) REQUIRE_CLOSE(v, mu, 1e-12);
    REQUIRE_THROWS_AS(attack_contrast(x, -1.0), std::invalid_argument);
}

TEST_CASE(jpeg_quality_behaviour) {
    const Tensor x = smooth_image(64, 64, 3);
    const Tensor q100 = attack_jpeg(x, 100);
    require_valid_image(q100, {3, 64, 64});
    REQUIRE(psnr(x, q100) >= 35.0);
    REQUIRE(psnr(x, attack_jpeg(x, 10)) < psnr(x, attack_jpeg(x, 50)));
    REQUIRE_THROWS_AS(attack_jpeg(x, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(attack_jpeg(x, 101), std::invalid_argument);
}

TEST_CASE(gaussian_noise_examples) {
    const Tensor x = smooth_image(32, 32, 4);
    REQUIRE(attack_gaussian_noise(x, 0.0, RngSeed{1}).data == x.data);
    const Tensor a = attack_gaussian_noise(x, 1.0, RngSeed{5});
    const Tensor b = attack_gaussian_noise(x, 1.0, RngSeed{5});
    REQUIRE(a.data == b.data);
    const Tensor c = attack_gaussian_noise(x, 1.0, RngSeed{6});
    REQUIRE(a.data != c.data);
    require_valid_image(a, {3, 32, 32});
    REQUIRE_THROWS_AS(attack_gaussian_noise(x, -1.0, RngSeed{1}), std::invalid_argument);

    // Small sigma on a mid-gray image never clamps, so the injected noise is
    // directly observable: sample variance within 5% over >1e6 draws.
    const Tensor gray({3, 600, 600}, 0.5);
    const Real sigma = 0.01;
    const Tensor noisy = attack_gaussian_noise(gray, sigma, RngSeed{7});
    Real mean = 0.0;
    for (Real v : noisy.data) mean += (v - 0.5) / sigma;
    mean /= static_cast<Real>(noisy.data.size());
    Real var = 0.0;
    for (Real v : noisy.data) {
        const Real d = (v - 0.5) / sigma - mean;
        var += d * d;
    }
    var /= static_cast<Real>(noisy.data.size());
    REQUIRE(noisy.data.size() >= 1000000);
    REQUIRE(std::abs(var - 1.0) < 0.05);
}

TEST_CASE(crop_resize_examples) {
    const Tensor x = smooth_image(64, 64, 8);
    REQUIRE(attack_crop_resize(x, 1.0).data == x.data);

    const Tensor cimg({3, 32, 32}, 0.7);
    for (Real v : attack_crop_resize(cimg, 0.5).data) REQUIRE_CLOSE(v, 0.7, 1e-12);

    // keep=0.5 equals an explicit 32x32 center crop followed by resize.
    const Tensor manual = bilinear_resize(center_crop(x, 32, 32), 64, 64);
    REQUIRE(attack_crop_resize(x, 0.5).data == manual.data);

    const Tensor r1 = attack_crop_resize(x, 0.5, true, RngSeed{3});
    const Tensor r2 = attack_crop_resize(x, 0.5, true, RngSeed{3});
    REQUIRE(r1.data == r2.data);
    require_valid_image(r1, {3, 64, 64});

    REQUIRE_THROWS_AS(attack_crop_resize(x, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(attack_crop_resize(x, 1.5), std::invalid_argument);
}

TEST_CASE(gaussian_denoise_examples) {
    const Tensor x = smooth_image(32, 32, 9);
    REQUIRE(attack_gaussian_denoise(x, 1).data == x.data);
    const Tensor cimg({3, 16, 16}, 0.4);
    for (Real v : attack_gaussian_denoise(cimg, 9).data) REQUIRE_CLOSE(v, 0.4, 1e-12);
    REQUIRE_THROWS_AS(attack_gaussian_denoise(x, 8), std::invalid_argument);
    REQUIRE_THROWS_AS(attack_gaussian_denoise(x, -3), std::invalid_argument);

    for (int width : {1, 3, 9, 15}) {
        const auto taps = gaussian_kernel(width);
        REQUIRE(static_cast<int>(taps.size()) == width);
        Real sum = 0.0;
        for (Real t : taps) sum += t;
        REQUIRE_CLOSE(sum, 1.0, 1e-6);
    }

    // Blur attenuates noise: variance drops on a noise-dominated image.
    const Tensor noisy = attack_gaussian_noise(Tensor({3, 32, 32}, 0.5), 0.1, RngSeed{4});
    const Tensor blurred = attack_gaussian_denoise(noisy, 9);
    REQUIRE(mean_abs_diff(blurred, Tensor({3, 32, 32}, 0.5)) <
            mean_abs_diff(noisy, Tensor({3, 32, 32}, 0.5)));
}

TEST_CASE(bm3d_like_examples) {
    const Tensor cimg({3, 16, 16}, 0.6);
    const Tensor still = attack_bm3d_like(cimg);
    for (Real v : still.data) REQUIRE_CLOSE(v, 0.6, 1e-12);

    const Tensor clean = smooth_image(64, 64, 10);
    const Tensor noisy = attack_gaussian_noise(clean, 0.1, RngSeed{11});
    const Tensor denoised = attack_bm3d_like(noisy);
    require_valid_image(denoised, {3, 64, 64});
    REQUIRE(psnr(clean, denoised) > psnr(clean, noisy));
    REQUIRE_THROWS_AS(attack_bm3d_like(clean, 0.0), std::invalid_argument);
}

TEST_CASE(reconstruction_attack_requires_trained_model) {
    AutoencoderConfig cfg;
    cfg.image_h = 32;
    cfg.image_w = 32;
    cfg.base_width = 8;
    const ConvAutoencoder fresh(cfg);
    const Tensor x = smooth_image(32, 32, 12);
    REQUIRE_THROWS_AS(attack_reconstruct(x, fresh), InvalidStateError);

    ConvAutoencoder marked(cfg);
    marked.mark_trained();
    const Tensor y = attack_reconstruct(x, marked);
    require_valid_image(y, {3, 32, 32});
    REQUIRE(attack_reconstruct(x, marked).data == y.data);
}

TEST_CASE(apply_attack_dispatch) {
    const Tensor x = smooth_image(32, 32, 13);
    AttackSpec jpeg = default_attack(AttackKind::kJpeg);
    REQUIRE(apply_attack(x, jpeg).data == attack_jpeg(x, 10).data);

    AttackSpec noise = default_attack(AttackKind::kGaussianNoise);
    noise.params["sigma"] = 0.0;
    REQUIRE(apply_attack(x, noise).data == x.data);

    AttackSpec bad = default_attack(AttackKind::kBrightness);
    bad.params["gamma"] = 2.0;
    REQUIRE_THROWS_AS(apply_attack(x, bad), std::invalid_argument);

    AttackSpec recon = default_attack(AttackKind::kReconPrimaryAe);
    REQUIRE_THROWS_AS(apply_attack(x, recon), InvalidStateError);

    // The external denoiser hook replaces the built-in bm3d stand-in.
    AttackContext ctx;
    ctx.strong_denoiser = [](const PixelImage& img, Real) { return img; };
    AttackSpec bm = default_attack(AttackKind::kBm3dLike);
    REQUIRE(apply_attack(x, bm, ctx).data == x.data);
}

TEST_CASE(default_parameters_match_evaluation_protocol) {
    REQUIRE(default_attack(AttackKind::kBrightness).param_or("factor", 0) == 0.1);
    REQUIRE(default_attack(AttackKind::kContrast).param_or("factor", 0) == 0.1);
    REQUIRE(default_attack(AttackKind::kJpeg).param_or("quality", 0) == 10.0);
    REQUIRE(default_attack(AttackKind::kGaussianNoise).param_or("sigma", 0) == 1.0);
    REQUIRE(default_attack(AttackKind::kCropResize).param_or("keep", 0) == 0.5);
    REQUIRE(default_attack(AttackKind::kGaussianDenoise).param_or("kernel_width", 0) == 9.0);
    REQUIRE(default_attack(AttackKind::kBm3dLike).param_or("sigma", 0) == 0.9);
}

TEST_CASE(spec_json_round_trip_and_fingerprint) {
    AttackSpec spec = default_attack(AttackKind::kCropResize);
    spec.seed = RngSeed{42};
    const AttackSpec back = AttackSpec::from_json(spec.to_json());
    REQUIRE(back.kind == spec.kind);
    REQUIRE(back.params == spec.params);
    REQUIRE(back.seed.value == spec.seed.value);
    REQUIRE(back.fingerprint() == spec.fingerprint());

    AttackSpec other = spec;
    other.params["keep"] = 0.25;
    REQUIRE(other.fingerprint() != spec.fingerprint());

    REQUIRE_THROWS_AS(AttackSpec::from_json(R"({"kind":"unknown"})"), std::invalid_argument);
}

TEST_CASE(shipped_suite_file_matches_builtin_defaults) {
    std::ifstream in(std::string(LW_DATA_DIR) + "/attack_suite_v1.json", std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    REQUIRE(buf.str() == attack_suite_to_json(default_attack_suite()));

    const auto suite = attack_suite_from_json(buf.str());
    REQUIRE(suite.size() == 10);
    for (std::size_t i = 0; i < suite.size(); ++i)
        REQUIRE(suite[i].fingerprint() == default_attack_suite()[i].fingerprint());
}

TEST_MAIN()
