#include "lw/pipeline.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace lw {

namespace {

void check_compatible(const WatermarkBundle& bundle, const ConvAutoencoder& ae) {
    if (!ae.trained()) throw InvalidStateError("watermarking requires a trained autoencoder");
    const std::string fp = fingerprint_hex(ae.weights_fingerprint());
    if (bundle.ae_fingerprint != fp)
        throw IncompatibleBundle("bundle was trained against autoencoder " +
                                 bundle.ae_fingerprint + ", got " + fp);
}

void check_image(const Tensor& x, const ConvAutoencoder& ae) {
    const auto& cfg = ae.config();
    check_arg(x.ndim() == 3 && x.dim(0) == 3 && x.dim(1) == cfg.image_h &&
                  x.dim(2) == cfg.image_w,
              "pipeline: expected a {3," + std::to_string(cfg.image_h) + "," +
                  std::to_string(cfg.image_w) + "} image, got " + x.shape_str());
}

void check_latent(const Tensor& z, const WatermarkBundle& bundle) {
    check_arg(z.ndim() == 3 && z.dim(0) == 4 && z.dim(1) == bundle.cfg.latent_h &&
                  z.dim(2) == bundle.cfg.latent_w,
              "pipeline: expected a {4," + std::to_string(bundle.cfg.latent_h) + "," +
                  std::to_string(bundle.cfg.latent_w) + "} latent, got " + z.shape_str());
}

}  // namespace

Tensor inject_from_latent(const Tensor& z, const BitMessage& m, const WatermarkBundle& bundle,
                          const ConvAutoencoder& ae) {
    check_compatible(bundle, ae);
    check_latent(z, bundle);
    check_arg(m.n() == bundle.cfg.n, "inject: message has " + std::to_string(m.n()) +
                                         " bits, bundle expects " +
                                         std::to_string(bundle.cfg.n));
    const Tensor plane = bundle.modules.msg_enc.encode(m);
    const Tensor zp = couple(z, plane, bundle.modules.coupler, bundle.cfg.injection_channel);
    Tensor out = ae.decode(zp);
    for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

Tensor inject(const Tensor& x, const BitMessage& m, const WatermarkBundle& bundle,
              const ConvAutoencoder& ae) {
    check_compatible(bundle, ae);
    check_image(x, ae);
    return inject_from_latent(ae.encode(x), m, bundle, ae);
}

DetectResult detect(const Tensor& x, const WatermarkBundle& bundle, const ConvAutoencoder& ae) {
    check_compatible(bundle, ae);
    check_image(x, ae);
    const Tensor zp = ae.encode(x);
    const Tensor feat = decouple(zp, bundle.modules.decoupler, bundle.cfg.injection_channel);
    auto [logits, bits] = bundle.modules.msg_dec.decode(feat);
    return {std::move(logits), std::move(bits)};
}

bool identify(const Tensor& x, const BitMessage& claimed, const WatermarkBundle& bundle,
              const ConvAutoencoder& ae, Real fpr) {
    check_arg(fpr > 0.0 && fpr < 1.0, "identify: fpr must lie in (0,1)");
    check_arg(claimed.n() == bundle.cfg.n, "identify: message length mismatch");
    const DetectResult r = detect(x, bundle, ae);
    return matched_bits(r.bits, claimed) >= tpr_threshold(bundle.cfg.n, fpr);
}

void save_bundle(const WatermarkBundle& bundle, const std::string& path) { bundle.save(path); }

WatermarkBundle load_bundle(const std::string& path) { return WatermarkBundle::load(path); }

Tensor mask_channel(const Tensor& x, const ConvAutoencoder& ae, int channel) {
    if (!ae.trained()) throw InvalidStateError("mask_channel requires a trained autoencoder");
    check_image(x, ae);
    check_arg(channel >= 0 && channel < 4, "mask_channel: channel must be 0..3");
    Tensor z = ae.encode(x);
    const std::size_t plane = static_cast<std::size_t>(z.dim(1)) * z.dim(2);
    std::fill_n(z.data.begin() + static_cast<std::ptrdiff_t>(channel) * plane, plane, 0.0);
    Tensor out = ae.decode(z);
    for (auto& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

std::string detect_record_json(const std::string& image_id, const DetectResult& result,
                               const BitMessage& claimed, Real fpr) {
    const int n = result.bits.n();
    check_arg(claimed.n() == n, "detect record: message length mismatch");
    const int threshold = tpr_threshold(n, fpr);
    nlohmann::json j;
    j["image_id"] = image_id;
    j["message_hex"] = to_hex(result.bits);
    j["bitacc"] = bit_accuracy(result.bits, claimed);
    j["identified"] = matched_bits(result.bits, claimed) >= threshold;
    j["threshold"] = threshold;
    j["n"] = n;
    return j.dump();
}

}  // namespace lw
