#include "lw/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lw/archive.hpp"

namespace lw {

namespace {

using json = nlohmann::json;

struct KindRow {
    AttackKind kind;
    const char* name;
    AttackCategory category;
};

constexpr KindRow kKinds[] = {
    {AttackKind::kBrightness, "brightness", AttackCategory::kDestructive},
    {AttackKind::kContrast, "contrast", AttackCategory::kDestructive},
    {AttackKind::kJpeg, "jpeg", AttackCategory::kDestructive},
    {AttackKind::kGaussianNoise, "gaussian_noise", AttackCategory::kDestructive},
    {AttackKind::kCropResize, "crop_resize", AttackCategory::kDestructive},
    {AttackKind::kGaussianDenoise, "gaussian_denoise", AttackCategory::kConstructive},
    {AttackKind::kBm3dLike, "bm3d_like", AttackCategory::kConstructive},
    {AttackKind::kReconPrimaryAe, "recon_primary_ae", AttackCategory::kReconstructive},
    {AttackKind::kReconAltAe1, "recon_alt_ae_1", AttackCategory::kReconstructive},
    {AttackKind::kReconAltAe2, "recon_alt_ae_2", AttackCategory::kReconstructive},
};

const KindRow& row_of(AttackKind kind) {
    for (const auto& r : kKinds)
        if (r.kind == kind) return r;
    throw std::invalid_argument("unknown attack kind");
}

int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

PixelImage crop_at(const PixelImage& x, int r0, int c0, int ch, int cw) {
    const int h = x.dim(1), w = x.dim(2);
    PixelImage out({3, ch, cw});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < ch; ++i)
            for (int j = 0; j < cw; ++j)
                out.data[(static_cast<std::size_t>(c) * ch + i) * cw + j] =
                    x.data[(static_cast<std::size_t>(c) * h + (r0 + i)) * w + (c0 + j)];
    return out;
}

}  // namespace

std::string to_string(AttackKind kind) { return row_of(kind).name; }

AttackKind attack_kind_from_string(const std::string& name) {
    for (const auto& r : kKinds)
        if (name == r.name) return r.kind;
    throw std::invalid_argument("unknown attack kind: " + name);
}

AttackCategory attack_category(AttackKind kind) { return row_of(kind).category; }

void AttackSpec::validate() const {
    static const std::map<AttackKind, std::vector<std::string>> kAllowed = {
        {AttackKind::kBrightness, {"factor"}},
        {AttackKind::kContrast, {"factor"}},
        {AttackKind::kJpeg, {"quality"}},
        {AttackKind::kGaussianNoise, {"sigma"}},
        {AttackKind::kCropResize, {"keep", "random_place"}},
        {AttackKind::kGaussianDenoise, {"kernel_width"}},
        {AttackKind::kBm3dLike, {"sigma"}},
        {AttackKind::kReconPrimaryAe, {}},
        {AttackKind::kReconAltAe1, {}},
        {AttackKind::kReconAltAe2, {}},
    };
    const auto& allowed = kAllowed.at(kind);
    for (const auto& [name, value] : params) {
        check_arg(std::find(allowed.begin(), allowed.end(), name) != allowed.end(),
                  "attack " + to_string(kind) + ": unknown parameter '" + name + "'");
        check_arg(std::isfinite(value), "attack parameter '" + name + "' must be finite");
    }
    switch (kind) {
        case AttackKind::kBrightness:
        case AttackKind::kContrast:
            check_arg(param_or("factor", 0.1) >= 0.0, "factor must be >= 0");
            break;
        case AttackKind::kJpeg: {
            const Real q = param_or("quality", 10);
            check_arg(q >= 1 && q <= 100 && q == std::floor(q),
                      "jpeg quality must be an integer in [1,100]");
            break;
        }
        case AttackKind::kGaussianNoise:
            check_arg(param_or("sigma", 1.0) >= 0.0, "sigma must be >= 0");
            break;
        case AttackKind::kCropResize: {
            const Real keep = param_or("keep", 0.5);
            check_arg(keep > 0.0 && keep <= 1.0, "keep must lie in (0,1]");
            const Real rp = param_or("random_place", 0.0);
            check_arg(rp == 0.0 || rp == 1.0, "random_place must be 0 or 1");
            break;
        }
        case AttackKind::kGaussianDenoise: {
            const Real wdt = param_or("kernel_width", 9);
            check_arg(wdt >= 1 && wdt == std::floor(wdt) && std::llround(wdt) % 2 == 1,
                      "kernel_width must be an odd integer >= 1");
            break;
        }
        case AttackKind::kBm3dLike:
            check_arg(param_or("sigma", 0.9) > 0.0, "sigma must be > 0");
            break;
        default:
            break;
    }
}

Real AttackSpec::param_or(const std::string& name, Real fallback) const {
    const auto it = params.find(name);
    return it == params.end() ? fallback : it->second;
}

std::string AttackSpec::canonical_json() const {
    json j;
    j["kind"] = to_string(kind);
    j["params"] = json::object();
    for (const auto& [name, value] : params) j["params"][name] = value;
    j["seed"] = seed.value;
    return j.dump();
}

std::string AttackSpec::fingerprint() const {
    const std::string c = canonical_json();
    return fingerprint_hex(fnv1a64(c.data(), c.size()));
}

std::string AttackSpec::to_json() const { return canonical_json(); }

AttackSpec AttackSpec::from_json(const std::string& text) {
    const json j = json::parse(text);
    AttackSpec spec;
    spec.kind = attack_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("params"))
        for (const auto& [name, value] : j.at("params").items())
            spec.params[name] = value.get<Real>();
    if (j.contains("seed")) spec.seed = RngSeed{j.at("seed").get<std::uint64_t>()};
    spec.validate();
    return spec;
}

AttackSpec default_attack(AttackKind kind) {
    AttackSpec spec;
    spec.kind = kind;
    switch (kind) {
        case AttackKind::kBrightness:
        case AttackKind::kContrast:
            spec.params = {{"factor", 0.1}};
            break;
        case AttackKind::kJpeg:
            spec.params = {{"quality", 10.0}};
            break;
        case AttackKind::kGaussianNoise:
            spec.params = {{"sigma", 1.0}};
            break;
        case AttackKind::kCropResize:
            spec.params = {{"keep", 0.5}, {"random_place", 0.0}};
            break;
        case AttackKind::kGaussianDenoise:
            spec.params = {{"kernel_width", 9.0}};
            break;
        case AttackKind::kBm3dLike:
            spec.params = {{"sigma", 0.9}};
            break;
        default:
            break;  // reconstruction attacks carry no parameters
    }
    return spec;
}

std::vector<AttackSpec> default_attack_suite() {
    std::vector<AttackSpec> suite;
    for (const auto& r : kKinds) suite.push_back(default_attack(r.kind));
    return suite;
}

std::string attack_suite_to_json(const std::vector<AttackSpec>& suite) {
    json j;
    j["version"] = 1;
    j["attacks"] = json::array();
    for (const auto& spec : suite) j["attacks"].push_back(json::parse(spec.canonical_json()));
    return j.dump(2) + "\n";
}

std::vector<AttackSpec> attack_suite_from_json(const std::string& text) {
    const json j = json::parse(text);
    check_arg(j.contains("version") && j.at("version").get<int>() == 1,
              "attack suite: unsupported version");
    std::vector<AttackSpec> suite;
    for (const auto& entry : j.at("attacks")) suite.push_back(AttackSpec::from_json(entry.dump()));
    check_arg(!suite.empty(), "attack suite: empty");
    return suite;
}

std::vector<AttackSpec> load_attack_suite(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check_arg(in.good(), "attack suite: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return attack_suite_from_json(buf.str());
}

PixelImage attack_brightness(const PixelImage& x, Real factor) {
    check_pixel_image(x, "attack input");
    check_arg(factor >= 0.0, "brightness factor must be >= 0");
    PixelImage out = x;
    for (auto& v : out.data) v *= factor;
    clamp01(out);
    return out;
}

PixelImage attack_contrast(const PixelImage& x, Real factor) {
    check_pixel_image(x, "attack input");
    check_arg(factor >= 0.0, "contrast factor must be >= 0");
    const Real mu = gray_mean(x);
    PixelImage out = x;
    for (auto& v : out.data) v = mu + factor * (v - mu);
    clamp01(out);
    return out;
}

PixelImage attack_jpeg(const PixelImage& x, int quality) {
    check_pixel_image(x, "attack input");
    return decode_jpeg(encode_jpeg(x, quality));
}

PixelImage attack_gaussian_noise(const PixelImage& x, Real sigma, RngSeed seed) {
    check_pixel_image(x, "attack input");
    check_arg(sigma >= 0.0, "noise sigma must be >= 0");
    if (sigma == 0.0) return x;
    Rng rng(seed);
    PixelImage out = x;
    for (auto& v : out.data) v += sigma * rng.normal();
    clamp01(out);
    return out;
}

PixelImage attack_crop_resize(const PixelImage& x, Real keep, bool random_place, RngSeed seed) {
    check_pixel_image(x, "attack input");
    check_arg(keep > 0.0 && keep <= 1.0, "crop keep fraction must lie in (0,1]");
    if (keep == 1.0) return x;
    const int h = x.dim(1), w = x.dim(2);
    const int ch = std::max<int>(1, static_cast<int>(std::llround(keep * h)));
    const int cw = std::max<int>(1, static_cast<int>(std::llround(keep * w)));
    int r0 = (h - ch) / 2, c0 = (w - cw) / 2;
    if (random_place) {
        Rng rng(seed);
        r0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - ch + 1)));
        c0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cw + 1)));
    }
    return bilinear_resize(crop_at(x, r0, c0, ch, cw), h, w);
}

std::vector<Real> gaussian_kernel(int width) {
    check_arg(width >= 1 && width % 2 == 1, "gaussian kernel width must be an odd integer >= 1");
    if (width == 1) return {1.0};
    const int radius = width / 2;
    const Real sigma = width / 6.0;
    std::vector<Real> taps(static_cast<std::size_t>(width));
    Real sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        const Real t = std::exp(-(static_cast<Real>(k) * k) / (2.0 * sigma * sigma));
        taps[static_cast<std::size_t>(k + radius)] = t;
        sum += t;
    }
    for (auto& t : taps) t /= sum;
    return taps;
}

PixelImage attack_gaussian_denoise(const PixelImage& x, int kernel_width) {
    check_pixel_image(x, "attack input");
    const auto taps = gaussian_kernel(kernel_width);
    if (kernel_width == 1) return x;
    const int h = x.dim(1), w = x.dim(2);
    const int radius = kernel_width / 2;

    PixelImage mid({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                Real acc = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    acc += taps[static_cast<std::size_t>(k + radius)] *
                           x.data[(static_cast<std::size_t>(c) * h + i) * w +
                                  reflect_index(j + k, w)];
                mid.data[(static_cast<std::size_t>(c) * h + i) * w + j] = acc;
            }
    PixelImage out({3, h, w});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                Real acc = 0.0;
                for (int k = -radius; k <= radius; ++k)
                    acc += taps[static_cast<std::size_t>(k + radius)] *
                           mid.data[(static_cast<std::size_t>(c) * h + reflect_index(i + k, h)) * w +
                                    j];
                out.data[(static_cast<std::size_t>(c) * h + i) * w + j] = acc;
            }
    clamp01(out);
    return out;
}

PixelImage attack_bm3d_like(const PixelImage& x, Real sigma) {
    check_pixel_image(x, "attack input");
    check_arg(sigma > 0.0, "denoiser strength must be > 0");
    const int h = x.dim(1), w = x.dim(2);
    constexpr int kPatchRadius = 1, kSearchRadius = 4;
    const Real h2 = (0.15 * sigma) * (0.15 * sigma);

    const auto px = [&](int c, int i, int j) {
        return x.data[(static_cast<std::size_t>(c) * h + clamp_index(i, h)) * w +
                      clamp_index(j, w)];
    };
    PixelImage out({3, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            Real wsum = 0.0, acc[3] = {0.0, 0.0, 0.0};
            for (int di = -kSearchRadius; di <= kSearchRadius; ++di)
                for (int dj = -kSearchRadius; dj <= kSearchRadius; ++dj) {
                    Real d2 = 0.0;
                    for (int c = 0; c < 3; ++c)
                        for (int pi = -kPatchRadius; pi <= kPatchRadius; ++pi)
                            for (int pj = -kPatchRadius; pj <= kPatchRadius; ++pj) {
                                const Real d = px(c, i + pi, j + pj) -
                                               px(c, i + di + pi, j + dj + pj);
                                d2 += d * d;
                            }
                    d2 /= 3.0 * (2 * kPatchRadius + 1) * (2 * kPatchRadius + 1);
                    const Real wgt = std::exp(-d2 / h2);
                    wsum += wgt;
                    for (int c = 0; c < 3; ++c) acc[c] += wgt * px(c, i + di, j + dj);
                }
            for (int c = 0; c < 3; ++c)
                out.data[(static_cast<std::size_t>(c) * h + i) * w + j] = acc[c] / wsum;
        }
    clamp01(out);
    return out;
}

PixelImage attack_reconstruct(const PixelImage& x, const ConvAutoencoder& attacker) {
    check_pixel_image(x, "attack input");
    if (!attacker.trained())
        throw InvalidStateError("reconstruction attack requires a trained autoencoder");
    PixelImage out = attacker.reconstruct(x);
    clamp01(out);
    return out;
}

PixelImage apply_attack(const PixelImage& x, const AttackSpec& spec, const AttackContext& ctx) {
    spec.validate();
    const auto need_ae = [&](const ConvAutoencoder* ae) -> const ConvAutoencoder& {
        if (ae == nullptr)
            throw InvalidStateError("reconstruction attack requires an attacker autoencoder");
        return *ae;
    };
    switch (spec.kind) {
        case AttackKind::kBrightness:
            return attack_brightness(x, spec.param_or("factor", 0.1));
        case AttackKind::kContrast:
            return attack_contrast(x, spec.param_or("factor", 0.1));
        case AttackKind::kJpeg:
            return attack_jpeg(x, static_cast<int>(std::llround(spec.param_or("quality", 10))));
        case AttackKind::kGaussianNoise:
            return attack_gaussian_noise(x, spec.param_or("sigma", 1.0), spec.seed);
        case AttackKind::kCropResize:
            return attack_crop_resize(x, spec.param_or("keep", 0.5),
                                      spec.param_or("random_place", 0.0) != 0.0, spec.seed);
        case AttackKind::kGaussianDenoise:
            return attack_gaussian_denoise(
                x, static_cast<int>(std::llround(spec.param_or("kernel_width", 9))));
        case AttackKind::kBm3dLike: {
            const Real sigma = spec.param_or("sigma", 0.9);
            if (ctx.strong_denoiser) {
                PixelImage out = ctx.strong_denoiser(x, sigma);
                check_same_shape(out, x, "external denoiser");
                clamp01(out);
                return out;
            }
            return attack_bm3d_like(x, sigma);
        }
        case AttackKind::kReconPrimaryAe:
            return attack_reconstruct(x, need_ae(ctx.primary_ae));
        case AttackKind::kReconAltAe1:
            return attack_reconstruct(x, need_ae(ctx.alt_ae_1));
        case AttackKind::kReconAltAe2:
            return attack_reconstruct(x, need_ae(ctx.alt_ae_2));
    }
    throw std::invalid_argument("unknown attack kind");
}

}  // namespace lw
