#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lw/bits.hpp"
#include "lw/nn.hpp"
#include "lw/rng.hpp"

namespace lw {

// injection_channel value meaning "fuse all four channels at once".
inline constexpr int kInjectAll = -1;

struct WmConfig {
    int n = 48;
    int latent_h = 8, latent_w = 8;
    int msg_hidden = 256;
    int unet_base = 32;
    int injection_channel = 0;  // 0..3 or kInjectAll
    RngSeed seed{1};

    void validate() const;
    std::string canonical_json() const;
    std::string fingerprint() const;
    static WmConfig from_json(const std::string& text);

    int coupler_in() const { return (injection_channel == kInjectAll ? 4 : 1) + 1; }
    int coupler_out() const { return injection_channel == kInjectAll ? 4 : 1; }
    int decoupler_in() const { return injection_channel == kInjectAll ? 4 : 1; }
};

// Four fully-connected layers with tanh after each; maps a bipolar message
// to one latent plane's worth of values in (-1,1).
class MessageEncoder {
public:
    MessageEncoder() = default;
    MessageEncoder(const WmConfig& cfg, Rng& rng);

    ag::Var operator()(const ag::Var& bipolar) const;  // {B,n} -> {B,1,h,w}
    Tensor encode(const BitMessage& m) const;          // -> {1,h,w}
    void collect(const std::string& prefix, nn::ParamList& out) const;

private:
    int n_ = 0, h_ = 0, w_ = 0;
    nn::Linear l0_, l1_, l2_, l3_;
};

// Mirror of the encoder: flattens a feature plane into logits in (-1,1).
class MessageDecoder {
public:
    MessageDecoder() = default;
    MessageDecoder(const WmConfig& cfg, Rng& rng);

    ag::Var operator()(const ag::Var& feat) const;  // {B,1,h,w} -> {B,n}
    std::pair<std::vector<Real>, BitMessage> decode(const Tensor& feat) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;

private:
    int n_ = 0, h_ = 0, w_ = 0;
    nn::Linear l0_, l1_, l2_, l3_;
};

// Two-resolution U-net: full-res stage, stride-2 descent, middle stage,
// transposed-conv ascent, skip concatenation, linear conv head.
class UNet {
public:
    UNet() = default;
    UNet(int in_ch, int out_ch, int base, Rng& rng);

    ag::Var operator()(const ag::Var& x) const;
    void collect(const std::string& prefix, nn::ParamList& out) const;
    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }

private:
    int in_ch_ = 0, out_ch_ = 0;
    nn::Conv2d c_in_, down_, mid_, fuse_, head_;
    nn::ConvTranspose2d up_;
    nn::GroupNorm g_in_, g_down_, g_mid_, g_up_, g_fuse_;
};

// The four watermark networks, seeded per module from cfg.seed.
struct WmModules {
    WmConfig cfg;
    MessageEncoder msg_enc;
    MessageDecoder msg_dec;
    UNet coupler;
    UNet decoupler;

    explicit WmModules(const WmConfig& cfg);

    nn::ParamList params() const;
    nn::ParamList msg_params() const;
    nn::ParamList coupler_params() const;
    nn::ParamList decoupler_params() const;
};

// Fusion rule: the injected channel(s) are replaced by the coupler output;
// every other channel is copied through bit-identically.
ag::Var couple_var(const ag::Var& z, const ag::Var& mchan, const UNet& coupler, int channel);
ag::Var decouple_var(const ag::Var& zp, const UNet& decoupler, int channel);

Tensor couple(const Tensor& z, const Tensor& mchan, const UNet& coupler, int channel);
Tensor decouple(const Tensor& zp, const UNet& decoupler, int channel);

}  // namespace lw
