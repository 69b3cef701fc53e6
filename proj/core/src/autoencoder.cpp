#include "lw/autoencoder.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lw/metrics.hpp"

namespace lw {

namespace {
constexpr int kGroups = 4;

nlohmann::json config_json(const AutoencoderConfig& c) {
    return nlohmann::json{{"image_h", c.image_h},
                          {"image_w", c.image_w},
                          {"downsample_factor", c.downsample_factor},
                          {"latent_channels", c.latent_channels},
                          {"base_width", c.base_width},
                          {"extra_blocks", c.extra_blocks},
                          {"epochs", c.epochs},
                          {"learning_rate", c.learning_rate},
                          {"batch_size", c.batch_size},
                          {"holdout_fraction", c.holdout_fraction},
                          {"calibrate_latents", c.calibrate_latents},
                          {"canonicalize_channels", c.canonicalize_channels},
                          {"seed", c.seed.value}};
}

AutoencoderConfig config_from_json(const nlohmann::json& j) {
    AutoencoderConfig c;
    c.image_h = j.at("image_h").get<int>();
    c.image_w = j.at("image_w").get<int>();
    c.downsample_factor = j.at("downsample_factor").get<int>();
    c.latent_channels = j.at("latent_channels").get<int>();
    c.base_width = j.at("base_width").get<int>();
    c.extra_blocks = j.at("extra_blocks").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<Real>();
    c.batch_size = j.at("batch_size").get<int>();
    c.holdout_fraction = j.at("holdout_fraction").get<Real>();
    c.calibrate_latents = j.at("calibrate_latents").get<bool>();
    c.canonicalize_channels = j.at("canonicalize_channels").get<bool>();
    c.seed = RngSeed{j.at("seed").get<std::uint64_t>()};
    return c;
}

}  // namespace

void AutoencoderConfig::validate() const {
    check_arg(latent_channels == 4, "autoencoder: latent layout is fixed at 4 channels");
    check_arg(downsample_factor == 8,
              "autoencoder: downsample factor is structural (three stride-2 stages = 8)");
    check_arg(image_h > 0 && image_w > 0 && image_h % downsample_factor == 0 &&
                  image_w % downsample_factor == 0,
              "autoencoder: image size must be positive and divisible by the downsample factor");
    check_arg(base_width >= kGroups && base_width % kGroups == 0,
              "autoencoder: base width must be a positive multiple of 4");
    check_arg(extra_blocks >= 0 && extra_blocks <= 4, "autoencoder: extra_blocks in [0,4]");
    check_arg(epochs >= 1 && batch_size >= 1, "autoencoder: epochs and batch size must be >= 1");
    check_arg(learning_rate > 0.0, "autoencoder: learning rate must be positive");
    check_arg(holdout_fraction >= 0.0 && holdout_fraction < 1.0,
              "autoencoder: holdout fraction in [0,1)");
}

std::string AutoencoderConfig::fingerprint() const {
    const std::string s = config_json(*this).dump();
    return fingerprint_hex(fnv1a64(s.data(), s.size()));
}

ConvAutoencoder::ConvAutoencoder(const AutoencoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed_split(cfg_.seed, "ae-weights"));
    const int bw = cfg_.base_width;
    e0_ = nn::Conv2d(3, bw, 4, 2, 1, rng);
    eg0_ = nn::GroupNorm(bw, kGroups);
    e1_ = nn::Conv2d(bw, 2 * bw, 4, 2, 1, rng);
    eg1_ = nn::GroupNorm(2 * bw, kGroups);
    e2_ = nn::Conv2d(2 * bw, 4 * bw, 4, 2, 1, rng);
    eg2_ = nn::GroupNorm(4 * bw, kGroups);
    for (int i = 0; i < cfg_.extra_blocks; ++i) {
        eextra_.emplace_back(4 * bw, 4 * bw, 3, 1, 1, rng);
        egextra_.emplace_back(4 * bw, kGroups);
    }
    ehead_ = nn::Conv2d(4 * bw, 4, 3, 1, 1, rng);

    d_in_ = nn::Conv2d(4, 4 * bw, 3, 1, 1, rng);
    dg_in_ = nn::GroupNorm(4 * bw, kGroups);
    for (int i = 0; i < cfg_.extra_blocks; ++i) {
        dextra_.emplace_back(4 * bw, 4 * bw, 3, 1, 1, rng);
        dgextra_.emplace_back(4 * bw, kGroups);
    }
    u0_ = nn::ConvTranspose2d(4 * bw, 2 * bw, 4, 2, 1, rng);
    ug0_ = nn::GroupNorm(2 * bw, kGroups);
    u1_ = nn::ConvTranspose2d(2 * bw, bw, 4, 2, 1, rng);
    ug1_ = nn::GroupNorm(bw, kGroups);
    u2_ = nn::ConvTranspose2d(bw, bw, 4, 2, 1, rng);
    ug2_ = nn::GroupNorm(bw, kGroups);
    dhead_ = nn::Conv2d(bw, 3, 3, 1, 1, rng);
}

ag::Var ConvAutoencoder::encode_var(const ag::Var& x) const {
    check_arg(x->val.ndim() == 4 && x->val.dim(1) == 3 && x->val.dim(2) == cfg_.image_h &&
                  x->val.dim(3) == cfg_.image_w,
              "encode: expected {N,3," + std::to_string(cfg_.image_h) + "," +
                  std::to_string(cfg_.image_w) + "}, got " + x->val.shape_str());
    auto h = ag::silu_(eg0_(e0_(x)));
    h = ag::silu_(eg1_(e1_(h)));
    h = ag::silu_(eg2_(e2_(h)));
    for (std::size_t i = 0; i < eextra_.size(); ++i) h = ag::silu_(egextra_[i](eextra_[i](h)));
    return ehead_(h);
}

ag::Var ConvAutoencoder::decode_var(const ag::Var& z) const {
    check_arg(z->val.ndim() == 4 && z->val.dim(1) == 4 && z->val.dim(2) == cfg_.latent_h() &&
                  z->val.dim(3) == cfg_.latent_w(),
              "decode: expected {N,4," + std::to_string(cfg_.latent_h()) + "," +
                  std::to_string(cfg_.latent_w()) + "}, got " + z->val.shape_str());
    auto h = ag::silu_(dg_in_(d_in_(z)));
    for (std::size_t i = 0; i < dextra_.size(); ++i) h = ag::silu_(dgextra_[i](dextra_[i](h)));
    h = ag::silu_(ug0_(u0_(h)));
    h = ag::silu_(ug1_(u1_(h)));
    h = ag::silu_(ug2_(u2_(h)));
    return ag::sigmoid_(dhead_(h));
}

Tensor ConvAutoencoder::encode(const Tensor& x) const {
    const bool single = x.ndim() == 3;
    Tensor batch = x;
    if (single) batch.shape.insert(batch.shape.begin(), 1);
    Tensor z = encode_var(ag::constant(std::move(batch)))->val;
    if (single) z.shape.erase(z.shape.begin());
    return z;
}

Tensor ConvAutoencoder::decode(const Tensor& z) const {
    const bool single = z.ndim() == 3;
    Tensor batch = z;
    if (single) batch.shape.insert(batch.shape.begin(), 1);
    Tensor x = decode_var(ag::constant(std::move(batch)))->val;
    if (single) x.shape.erase(x.shape.begin());
    return x;
}

nn::ParamList ConvAutoencoder::params() const {
    nn::ParamList p;
    e0_.collect("enc.0", p);
    eg0_.collect("enc.0.gn", p);
    e1_.collect("enc.1", p);
    eg1_.collect("enc.1.gn", p);
    e2_.collect("enc.2", p);
    eg2_.collect("enc.2.gn", p);
    for (std::size_t i = 0; i < eextra_.size(); ++i) {
        eextra_[i].collect("enc.x" + std::to_string(i), p);
        egextra_[i].collect("enc.x" + std::to_string(i) + ".gn", p);
    }
    ehead_.collect("enc.head", p);
    d_in_.collect("dec.in", p);
    dg_in_.collect("dec.in.gn", p);
    for (std::size_t i = 0; i < dextra_.size(); ++i) {
        dextra_[i].collect("dec.x" + std::to_string(i), p);
        dgextra_[i].collect("dec.x" + std::to_string(i) + ".gn", p);
    }
    u0_.collect("dec.0", p);
    ug0_.collect("dec.0.gn", p);
    u1_.collect("dec.1", p);
    ug1_.collect("dec.1.gn", p);
    u2_.collect("dec.2", p);
    ug2_.collect("dec.2.gn", p);
    dhead_.collect("dec.head", p);
    return p;
}

void ConvAutoencoder::set_frozen(bool frozen) {
    auto p = params();
    nn::set_trainable(p, !frozen);
}

Archive ConvAutoencoder::to_archive() const {
    Archive a;
    a.kind = "autoencoder";
    a.config_fingerprint = cfg_.fingerprint();
    a.meta["config_json"] = config_json(cfg_).dump();
    a.meta["trained"] = trained_ ? "1" : "0";
    for (const auto& p : params()) a.add(p.name, p.var->val);
    return a;
}

ConvAutoencoder ConvAutoencoder::from_archive(const Archive& a) {
    if (a.kind != "autoencoder") throw ArchiveError("expected an autoencoder archive, got " + a.kind);
    const auto cfg = config_from_json(nlohmann::json::parse(a.meta.at("config_json")));
    ConvAutoencoder m(cfg);
    for (auto& p : m.params()) {
        const Tensor& stored = a.get(p.name);
        check_same_shape(p.var->val, stored, "autoencoder load");
        p.var->val = stored;
    }
    if (a.meta.count("trained") && a.meta.at("trained") == "1") m.mark_trained();
    return m;
}

void ConvAutoencoder::fold_latent_calibration(const std::vector<Tensor>& images) {
    check_arg(!images.empty(), "latent calibration: empty image set");
    // Per-channel latent moments over the calibration set.
    std::vector<Real> mean(4, 0.0), var(4, 0.0);
    std::size_t count = 0;
    for (const auto& img : images) {
        const Tensor z = encode(img);
        const std::size_t plane = static_cast<std::size_t>(z.dim(1)) * z.dim(2);
        for (int c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < plane; ++i)
                mean[static_cast<std::size_t>(c)] += z.data[static_cast<std::size_t>(c) * plane + i];
        count += plane;
    }
    for (auto& m : mean) m /= static_cast<Real>(count);
    for (const auto& img : images) {
        const Tensor z = encode(img);
        const std::size_t plane = static_cast<std::size_t>(z.dim(1)) * z.dim(2);
        for (int c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
                const Real d = z.data[static_cast<std::size_t>(c) * plane + i] -
                               mean[static_cast<std::size_t>(c)];
                var[static_cast<std::size_t>(c)] += d * d;
            }
    }
    for (auto& v : var) v = std::max(std::sqrt(v / static_cast<Real>(count)), 1e-3);

    // z_cal = z / sigma folded into the encoder head; the decoder's input
    // conv absorbs the inverse scale, so the composite function is unchanged.
    // Only the scale is folded: a mean shift cannot be expressed exactly in
    // weight space because the decoder conv's zero padding would no longer
    // line up at the borders.
    Tensor& hw = ehead_.w->val;
    Tensor& hb = ehead_.b->val;
    const std::size_t hstride = hw.numel() / 4;
    for (int c = 0; c < 4; ++c) {
        const Real s = var[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < hstride; ++i) hw.data[static_cast<std::size_t>(c) * hstride + i] /= s;
        hb.data[static_cast<std::size_t>(c)] /= s;
    }
    Tensor& dw = d_in_.w->val;  // {4bw, 4, 3, 3}
    const int cout = dw.dim(0), k = dw.dim(2);
    for (int o = 0; o < cout; ++o)
        for (int c = 0; c < 4; ++c)
            for (int i = 0; i < k * k; ++i)
                dw.data[((static_cast<std::size_t>(o) * 4 + c) * k * k) + i] *=
                    var[static_cast<std::size_t>(c)];
}

std::vector<Real> ConvAutoencoder::reorder_channels_by_robustness(
    const std::vector<Tensor>& images, RngSeed seed) {
    check_arg(!images.empty(), "channel reorder: empty image set");
    Rng rng(seed_split(seed, "ae-canon"));
    const std::size_t take = std::min<std::size_t>(images.size(), 32);
    std::vector<Real> rho(4, 0.0);
    for (std::size_t s = 0; s < take; ++s) {
        const Tensor z = encode(images[s]);
        const Tensor base = encode(decode(z));
        const std::size_t plane = static_cast<std::size_t>(z.dim(1)) * z.dim(2);
        for (int c = 0; c < 4; ++c) {
            Tensor zp = z;
            std::vector<Real> delta(plane);
            for (std::size_t i = 0; i < plane; ++i) {
                delta[i] = 0.5 * rng.normal();
                zp.data[static_cast<std::size_t>(c) * plane + i] += delta[i];
            }
            const Tensor rec = encode(decode(zp));
            Real num = 0.0, dd = 0.0, rr = 0.0;
            for (std::size_t i = 0; i < plane; ++i) {
                const Real r = rec.data[static_cast<std::size_t>(c) * plane + i] -
                               base.data[static_cast<std::size_t>(c) * plane + i];
                num += delta[i] * r;
                dd += delta[i] * delta[i];
                rr += r * r;
            }
            const Real den = std::sqrt(dd) * std::sqrt(rr);
            if (den > 0) rho[static_cast<std::size_t>(c)] += num / den;
        }
    }
    for (auto& r : rho) r /= static_cast<Real>(take);

    std::vector<int> perm{0, 1, 2, 3};
    std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
        return rho[static_cast<std::size_t>(a)] > rho[static_cast<std::size_t>(b)];
    });
    apply_channel_permutation(perm);
    std::vector<Real> sorted(4);
    for (int i = 0; i < 4; ++i) sorted[static_cast<std::size_t>(i)] = rho[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    return sorted;
}

void ConvAutoencoder::apply_channel_permutation(const std::vector<int>& perm) {
    check_arg(perm.size() == 4, "channel permutation: need 4 entries");
    std::vector<bool> seen(4, false);
    for (int p : perm) {
        check_arg(p >= 0 && p < 4 && !seen[static_cast<std::size_t>(p)],
                  "channel permutation: not a permutation of 0..3");
        seen[static_cast<std::size_t>(p)] = true;
    }
    // Encoder head: output channel i of the new model is old channel perm[i].
    const Tensor hw = ehead_.w->val;
    const Tensor hb = ehead_.b->val;
    Tensor nhw = hw;
    Tensor nhb = hb;
    const std::size_t hstride = hw.numel() / 4;
    for (int i = 0; i < 4; ++i) {
        std::copy_n(hw.data.begin() + static_cast<std::ptrdiff_t>(
                                          static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]) * hstride),
                    hstride,
                    nhw.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * hstride));
        nhb.data[static_cast<std::size_t>(i)] = hb.data[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    ehead_.w->val = std::move(nhw);
    ehead_.b->val = std::move(nhb);

    // Decoder input conv: input channel i now carries old channel perm[i].
    const Tensor dw = d_in_.w->val;  // {cout, 4, k, k}
    Tensor ndw = dw;
    const int cout = dw.dim(0), kk = dw.dim(2) * dw.dim(3);
    for (int o = 0; o < cout; ++o) {
        for (int i = 0; i < 4; ++i) {
            std::copy_n(
                dw.data.begin() + static_cast<std::ptrdiff_t>(
                                      (static_cast<std::size_t>(o) * 4 +
                                       static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])) *
                                      static_cast<std::size_t>(kk)),
                static_cast<std::size_t>(kk),
                ndw.data.begin() + static_cast<std::ptrdiff_t>(
                                       (static_cast<std::size_t>(o) * 4 + static_cast<std::size_t>(i)) *
                                       static_cast<std::size_t>(kk)));
        }
    }
    d_in_.w->val = std::move(ndw);
}

TrainedAutoencoder train_autoencoder(const std::vector<Tensor>& images,
                                     const AutoencoderConfig& cfg) {
    cfg.validate();
    check_arg(!images.empty(), "train_autoencoder: empty dataset");
    for (const auto& img : images) {
        check_arg(img.ndim() == 3 && img.dim(0) == 3 && img.dim(1) == cfg.image_h &&
                      img.dim(2) == cfg.image_w,
                  "train_autoencoder: image shape mismatch, got " + img.shape_str());
        for (Real v : img.data)
            check_arg(v >= 0.0 && v <= 1.0, "train_autoencoder: pixel values must lie in [0,1]");
    }

    // Deterministic split: shuffle indices once, carve off the holdout tail.
    std::vector<std::size_t> idx(images.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng split_rng(seed_split(cfg.seed, "ae-split"));
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[split_rng.below(i)]);
    std::size_t holdout_n =
        std::min(idx.size() - 1, static_cast<std::size_t>(
                                     std::llround(cfg.holdout_fraction * static_cast<Real>(idx.size()))));
    std::vector<std::size_t> train_idx(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(holdout_n));
    std::vector<std::size_t> held_idx(idx.end() - static_cast<std::ptrdiff_t>(holdout_n), idx.end());
    if (held_idx.empty()) held_idx = train_idx;  // single-image degenerate case

    TrainedAutoencoder out{ConvAutoencoder(cfg)};
    ConvAutoencoder& model = out.model;
    nn::AdamW opt(model.params(), cfg.learning_rate);
    Rng order_rng(seed_split(cfg.seed, "ae-order"));

    const std::size_t steps_per_epoch =
        (train_idx.size() + static_cast<std::size_t>(cfg.batch_size) - 1) /
        static_cast<std::size_t>(cfg.batch_size);
    const std::size_t total_steps = steps_per_epoch * static_cast<std::size_t>(cfg.epochs);
    std::size_t step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = train_idx.size(); i > 1; --i)
            std::swap(train_idx[i - 1], train_idx[order_rng.below(i)]);
        Real epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            // Cosine decay to 10% of the base rate over the full run.
            const Real frac = static_cast<Real>(step++) / static_cast<Real>(total_steps);
            opt.set_lr(cfg.learning_rate *
                       (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * frac))));
            const std::size_t end =
                std::min(train_idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Tensor> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(images[train_idx[i]]);
            auto x = ag::constant(stack(batch));
            auto loss = ag::mse_loss(model.decode_var(model.encode_var(x)), x);
            ag::backward(loss);
            opt.step();
            opt.zero_grad();
            epoch_loss += loss->val.data[0];
            ++batches;
        }
        out.epoch_loss.push_back(epoch_loss / static_cast<Real>(batches));
    }
    model.mark_trained();

    std::vector<Tensor> calib;
    for (std::size_t i = 0; i < std::min<std::size_t>(train_idx.size(), 256); ++i)
        calib.push_back(images[train_idx[i]]);
    if (cfg.calibrate_latents) model.fold_latent_calibration(calib);
    if (cfg.canonicalize_channels)
        out.channel_robustness = model.reorder_channels_by_robustness(calib, cfg.seed);

    Real psnr_sum = 0.0;
    for (std::size_t i : held_idx) psnr_sum += psnr(images[i], model.reconstruct(images[i]));
    out.heldout_psnr = psnr_sum / static_cast<Real>(held_idx.size());
    return out;
}

}  // namespace lw
