#pragma once

#include <string>

#include "lw/autoencoder.hpp"
#include "lw/bundle.hpp"
#include "lw/metrics.hpp"

namespace lw {

struct DetectResult {
    std::vector<Real> logits;
    BitMessage bits;
};

// Embeds the message in the image's latent and decodes back to pixels,
// clamped to [0,1]. The bundle must have been trained against `ae`.
Tensor inject(const Tensor& x, const BitMessage& m, const WatermarkBundle& bundle,
              const ConvAutoencoder& ae);

// Same embedding applied to an externally supplied latent {4,h,w} (e.g. from
// a generative sampler) instead of an encoded image.
Tensor inject_from_latent(const Tensor& z, const BitMessage& m, const WatermarkBundle& bundle,
                          const ConvAutoencoder& ae);

// Reads the message back from (a possibly attacked copy of) an image. Pure.
DetectResult detect(const Tensor& x, const WatermarkBundle& bundle, const ConvAutoencoder& ae);

// True iff the detected message matches the claimed one in at least
// tpr_threshold(n, fpr) positions.
bool identify(const Tensor& x, const BitMessage& claimed, const WatermarkBundle& bundle,
              const ConvAutoencoder& ae, Real fpr = 0.01);

void save_bundle(const WatermarkBundle& bundle, const std::string& path);
WatermarkBundle load_bundle(const std::string& path);

// Debug view: reconstruct with one latent channel zeroed.
Tensor mask_channel(const Tensor& x, const ConvAutoencoder& ae, int channel);

// One CLI result record: {image_id, message_hex, bitacc, identified, threshold, n}.
std::string detect_record_json(const std::string& image_id, const DetectResult& result,
                               const BitMessage& claimed, Real fpr = 0.01);

}  // namespace lw
