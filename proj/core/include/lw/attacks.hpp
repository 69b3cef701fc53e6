#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lw/autoencoder.hpp"
#include "lw/image.hpp"
#include "lw/rng.hpp"

namespace lw {

enum class AttackKind {
    kBrightness,
    kContrast,
    kJpeg,
    kGaussianNoise,
    kCropResize,
    kGaussianDenoise,
    kBm3dLike,
    kReconPrimaryAe,
    kReconAltAe1,
    kReconAltAe2,
};

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& name);

// Destructive attacks degrade the image; constructive ones enhance it;
// reconstructive ones regenerate it through an autoencoder.
enum class AttackCategory { kDestructive, kConstructive, kReconstructive };
AttackCategory attack_category(AttackKind kind);

struct AttackSpec {
    AttackKind kind = AttackKind::kBrightness;
    std::map<std::string, Real> params;  // missing keys fall back to defaults
    RngSeed seed{0};

    // Unknown or out-of-range parameters are rejected.
    void validate() const;
    Real param_or(const std::string& name, Real fallback) const;
    std::string canonical_json() const;
    std::string fingerprint() const;  // FNV-1a of the canonical form

    std::string to_json() const;
    static AttackSpec from_json(const std::string& text);
};

// One spec per kind, with the evaluation-default parameters.
AttackSpec default_attack(AttackKind kind);
std::vector<AttackSpec> default_attack_suite();

std::string attack_suite_to_json(const std::vector<AttackSpec>& suite);
std::vector<AttackSpec> attack_suite_from_json(const std::string& text);
std::vector<AttackSpec> load_attack_suite(const std::string& path);

// Reconstruction targets and the optional external denoiser for bm3d_like.
struct AttackContext {
    const ConvAutoencoder* primary_ae = nullptr;
    const ConvAutoencoder* alt_ae_1 = nullptr;
    const ConvAutoencoder* alt_ae_2 = nullptr;
    std::function<PixelImage(const PixelImage&, Real)> strong_denoiser;
};

PixelImage attack_brightness(const PixelImage& x, Real factor = 0.1);
PixelImage attack_contrast(const PixelImage& x, Real factor = 0.1);
PixelImage attack_jpeg(const PixelImage& x, int quality = 10);
PixelImage attack_gaussian_noise(const PixelImage& x, Real sigma = 1.0, RngSeed seed = RngSeed{0});
PixelImage attack_crop_resize(const PixelImage& x, Real keep = 0.5, bool random_place = false,
                              RngSeed seed = RngSeed{0});
PixelImage attack_gaussian_denoise(const PixelImage& x, int kernel_width = 9);
PixelImage attack_bm3d_like(const PixelImage& x, Real sigma = 0.9);
PixelImage attack_reconstruct(const PixelImage& x, const ConvAutoencoder& attacker);

PixelImage apply_attack(const PixelImage& x, const AttackSpec& spec,
                        const AttackContext& ctx = {});

// Normalized 1-D Gaussian taps (sigma = width/6); width must be odd.
std::vector<Real> gaussian_kernel(int width);

}  // namespace lw
