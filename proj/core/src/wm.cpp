#include "lw/wm.hpp"

#include <nlohmann/json.hpp>

#include "lw/archive.hpp"

namespace lw {

namespace {
using json = nlohmann::json;
}

void WmConfig::validate() const {
    check_arg(n >= 1, "wm config: n must be >= 1");
    check_arg(latent_h >= 2 && latent_w >= 2 && latent_h % 2 == 0 && latent_w % 2 == 0,
              "wm config: latent size must be even and >= 2");
    check_arg(msg_hidden >= 1, "wm config: msg_hidden must be >= 1");
    check_arg(unet_base >= 8 && unet_base % 8 == 0, "wm config: unet_base must be a multiple of 8");
    check_arg(injection_channel == kInjectAll ||
                  (injection_channel >= 0 && injection_channel < 4),
              "wm config: injection_channel must be 0..3 or all");
}

std::string WmConfig::canonical_json() const {
    json j;
    j["injection_channel"] =
        injection_channel == kInjectAll ? json("all") : json(injection_channel);
    j["latent_h"] = latent_h;
    j["latent_w"] = latent_w;
    j["msg_hidden"] = msg_hidden;
    j["n"] = n;
    j["seed"] = seed.value;
    j["unet_base"] = unet_base;
    return j.dump();
}

std::string WmConfig::fingerprint() const {
    const std::string c = canonical_json();
    return fingerprint_hex(fnv1a64(c.data(), c.size()));
}

WmConfig WmConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    WmConfig cfg;
    cfg.n = j.at("n").get<int>();
    cfg.latent_h = j.at("latent_h").get<int>();
    cfg.latent_w = j.at("latent_w").get<int>();
    cfg.msg_hidden = j.at("msg_hidden").get<int>();
    cfg.unet_base = j.at("unet_base").get<int>();
    const auto& ic = j.at("injection_channel");
    cfg.injection_channel = ic.is_string() ? kInjectAll : ic.get<int>();
    if (ic.is_string()) check_arg(ic.get<std::string>() == "all", "wm config: bad channel");
    cfg.seed = RngSeed{j.at("seed").get<std::uint64_t>()};
    cfg.validate();
    return cfg;
}

MessageEncoder::MessageEncoder(const WmConfig& cfg, Rng& rng)
    : n_(cfg.n),
      h_(cfg.latent_h),
      w_(cfg.latent_w),
      l0_(cfg.n, cfg.msg_hidden, rng),
      l1_(cfg.msg_hidden, cfg.msg_hidden, rng),
      l2_(cfg.msg_hidden, cfg.msg_hidden, rng),
      l3_(cfg.msg_hidden, cfg.latent_h * cfg.latent_w, rng) {}

ag::Var MessageEncoder::operator()(const ag::Var& bipolar) const {
    check_arg(bipolar->val.ndim() == 2 && bipolar->val.dim(1) == n_,
              "message encoder: expected {B,n} bipolar input");
    const int batch = bipolar->val.dim(0);
    auto y = ag::tanh_(l0_(bipolar));
    y = ag::tanh_(l1_(y));
    y = ag::tanh_(l2_(y));
    y = ag::tanh_(l3_(y));
    return ag::reshape(y, {batch, 1, h_, w_});
}

Tensor MessageEncoder::encode(const BitMessage& m) const {
    check_arg(m.n() == n_, "message encoder: message length mismatch");
    Tensor bip({1, n_});
    bip.data = to_bipolar(m);
    const ag::Var out = (*this)(ag::constant(bip));
    Tensor plane = out->val;
    plane.shape = {1, h_, w_};
    return plane;
}

void MessageEncoder::collect(const std::string& prefix, nn::ParamList& out) const {
    l0_.collect(prefix + ".l0", out);
    l1_.collect(prefix + ".l1", out);
    l2_.collect(prefix + ".l2", out);
    l3_.collect(prefix + ".l3", out);
}

MessageDecoder::MessageDecoder(const WmConfig& cfg, Rng& rng)
    : n_(cfg.n),
      h_(cfg.latent_h),
      w_(cfg.latent_w),
      l0_(cfg.latent_h * cfg.latent_w, cfg.msg_hidden, rng),
      l1_(cfg.msg_hidden, cfg.msg_hidden, rng),
      l2_(cfg.msg_hidden, cfg.msg_hidden, rng),
      l3_(cfg.msg_hidden, cfg.n, rng) {}

ag::Var MessageDecoder::operator()(const ag::Var& feat) const {
    check_arg(feat->val.ndim() == 4 && feat->val.dim(1) == 1 && feat->val.dim(2) == h_ &&
                  feat->val.dim(3) == w_,
              "message decoder: expected {B,1,h,w} feature input");
    const int batch = feat->val.dim(0);
    auto y = ag::reshape(feat, {batch, h_ * w_});
    y = ag::tanh_(l0_(y));
    y = ag::tanh_(l1_(y));
    y = ag::tanh_(l2_(y));
    return ag::tanh_(l3_(y));
}

std::pair<std::vector<Real>, BitMessage> MessageDecoder::decode(const Tensor& feat) const {
    check_arg(feat.ndim() == 3 && feat.dim(0) == 1 && feat.dim(1) == h_ && feat.dim(2) == w_,
              "message decoder: expected {1,h,w} feature input");
    Tensor batched = feat;
    batched.shape = {1, 1, h_, w_};
    const ag::Var out = (*this)(ag::constant(batched));
    std::vector<Real> logits = out->val.data;
    return {logits, threshold_bits(logits)};
}

void MessageDecoder::collect(const std::string& prefix, nn::ParamList& out) const {
    l0_.collect(prefix + ".l0", out);
    l1_.collect(prefix + ".l1", out);
    l2_.collect(prefix + ".l2", out);
    l3_.collect(prefix + ".l3", out);
}

UNet::UNet(int in_ch, int out_ch, int base, Rng& rng)
    : in_ch_(in_ch),
      out_ch_(out_ch),
      c_in_(in_ch, base, 3, 1, 1, rng),
      down_(base, 2 * base, 4, 2, 1, rng),
      mid_(2 * base, 2 * base, 3, 1, 1, rng),
      fuse_(2 * base, base, 3, 1, 1, rng),
      head_(base, out_ch, 3, 1, 1, rng),
      up_(2 * base, base, 4, 2, 1, rng),
      g_in_(base, 8),
      g_down_(2 * base, 8),
      g_mid_(2 * base, 8),
      g_up_(base, 8),
      g_fuse_(base, 8) {}

ag::Var UNet::operator()(const ag::Var& x) const {
    check_arg(x->val.ndim() == 4 && x->val.dim(1) == in_ch_,
              "unet: channel mismatch, got " + x->val.shape_str());
    const auto a = ag::silu_(g_in_(c_in_(x)));
    const auto d = ag::silu_(g_down_(down_(a)));
    const auto m = ag::silu_(g_mid_(mid_(d)));
    const auto u = ag::silu_(g_up_(up_(m)));
    const auto f = ag::silu_(g_fuse_(fuse_(ag::concat_channels({u, a}))));
    return head_(f);
}

void UNet::collect(const std::string& prefix, nn::ParamList& out) const {
    c_in_.collect(prefix + ".in", out);
    g_in_.collect(prefix + ".in.gn", out);
    down_.collect(prefix + ".down", out);
    g_down_.collect(prefix + ".down.gn", out);
    mid_.collect(prefix + ".mid", out);
    g_mid_.collect(prefix + ".mid.gn", out);
    up_.collect(prefix + ".up", out);
    g_up_.collect(prefix + ".up.gn", out);
    fuse_.collect(prefix + ".fuse", out);
    g_fuse_.collect(prefix + ".fuse.gn", out);
    head_.collect(prefix + ".head", out);
}

WmModules::WmModules(const WmConfig& config) : cfg(config) {
    cfg.validate();
    Rng enc_rng(seed_split(cfg.seed, "wm-msg-enc"));
    Rng dec_rng(seed_split(cfg.seed, "wm-msg-dec"));
    Rng coup_rng(seed_split(cfg.seed, "wm-coupler"));
    Rng decoup_rng(seed_split(cfg.seed, "wm-decoupler"));
    msg_enc = MessageEncoder(cfg, enc_rng);
    msg_dec = MessageDecoder(cfg, dec_rng);
    coupler = UNet(cfg.coupler_in(), cfg.coupler_out(), cfg.unet_base, coup_rng);
    decoupler = UNet(cfg.decoupler_in(), 1, cfg.unet_base, decoup_rng);
}

nn::ParamList WmModules::params() const {
    nn::ParamList out = msg_params();
    for (auto& p : coupler_params()) out.push_back(p);
    for (auto& p : decoupler_params()) out.push_back(p);
    return out;
}

nn::ParamList WmModules::msg_params() const {
    nn::ParamList out;
    msg_enc.collect("msg_enc", out);
    msg_dec.collect("msg_dec", out);
    return out;
}

nn::ParamList WmModules::coupler_params() const {
    nn::ParamList out;
    coupler.collect("coupler", out);
    return out;
}

nn::ParamList WmModules::decoupler_params() const {
    nn::ParamList out;
    decoupler.collect("decoupler", out);
    return out;
}

ag::Var couple_var(const ag::Var& z, const ag::Var& mchan, const UNet& coupler, int channel) {
    check_arg(z->val.ndim() == 4 && z->val.dim(1) == 4, "couple: expected {B,4,h,w} latent");
    check_arg(mchan->val.ndim() == 4 && mchan->val.dim(1) == 1 &&
                  mchan->val.dim(2) == z->val.dim(2) && mchan->val.dim(3) == z->val.dim(3),
              "couple: message channel shape mismatch");
    if (channel == kInjectAll) return coupler(ag::concat_channels({z, mchan}));
    check_arg(channel >= 0 && channel < 4, "couple: channel must be 0..3 or all");
    const auto zc = ag::slice_channels(z, channel, channel + 1);
    const auto fused = coupler(ag::concat_channels({zc, mchan}));
    std::vector<ag::Var> parts;
    if (channel > 0) parts.push_back(ag::slice_channels(z, 0, channel));
    parts.push_back(fused);
    if (channel < 3) parts.push_back(ag::slice_channels(z, channel + 1, 4));
    return ag::concat_channels(parts);
}

ag::Var decouple_var(const ag::Var& zp, const UNet& decoupler, int channel) {
    check_arg(zp->val.ndim() == 4 && zp->val.dim(1) == 4, "decouple: expected {B,4,h,w} latent");
    if (channel == kInjectAll) return decoupler(zp);
    check_arg(channel >= 0 && channel < 4, "decouple: channel must be 0..3 or all");
    return decoupler(ag::slice_channels(zp, channel, channel + 1));
}

Tensor couple(const Tensor& z, const Tensor& mchan, const UNet& coupler, int channel) {
    check_arg(z.ndim() == 3 && z.dim(0) == 4, "couple: expected {4,h,w} latent");
    Tensor zb = z;
    zb.shape = {1, 4, z.dim(1), z.dim(2)};
    Tensor mb = mchan;
    mb.shape = {1, 1, mchan.dim(1), mchan.dim(2)};
    Tensor out = couple_var(ag::constant(zb), ag::constant(mb), coupler, channel)->val;
    out.shape = {4, z.dim(1), z.dim(2)};
    return out;
}

Tensor decouple(const Tensor& zp, const UNet& decoupler, int channel) {
    check_arg(zp.ndim() == 3 && zp.dim(0) == 4, "decouple: expected {4,h,w} latent");
    Tensor zb = zp;
    zb.shape = {1, 4, zp.dim(1), zp.dim(2)};
    Tensor out = decouple_var(ag::constant(zb), decoupler, channel)->val;
    out.shape = {1, zp.dim(1), zp.dim(2)};
    return out;
}

}  // namespace lw
