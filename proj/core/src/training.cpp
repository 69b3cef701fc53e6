#include "lw/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lw {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

Real seconds_since(Clock::time_point t0) {
    return std::chrono::duration<Real>(Clock::now() - t0).count();
}

BitMessage draw_message(int n, Rng& rng) {
    BitMessage m;
    m.bits.resize(static_cast<std::size_t>(n));
    for (auto& b : m.bits) b = rng.bit();
    return m;
}

struct MessageBatch {
    std::vector<BitMessage> messages;
    Tensor bipolar;  // {B,n}
};

MessageBatch draw_batch(int batch, int n, Rng& rng) {
    MessageBatch out;
    out.bipolar = Tensor({batch, n});
    for (int b = 0; b < batch; ++b) {
        out.messages.push_back(draw_message(n, rng));
        const auto bip = to_bipolar(out.messages.back());
        std::copy(bip.begin(), bip.end(),
                  out.bipolar.data.begin() + static_cast<std::ptrdiff_t>(b) * n);
    }
    return out;
}

Real batch_bit_accuracy(const Tensor& logits, const std::vector<BitMessage>& messages) {
    const int batch = logits.dim(0), n = logits.dim(1);
    Real acc = 0.0;
    for (int b = 0; b < batch; ++b) {
        std::vector<Real> row(logits.data.begin() + static_cast<std::ptrdiff_t>(b) * n,
                              logits.data.begin() + static_cast<std::ptrdiff_t>(b + 1) * n);
        acc += bit_accuracy(threshold_bits(row), messages[static_cast<std::size_t>(b)]);
    }
    return acc / batch;
}

// Cycles shuffled dataset indices; reshuffles at each epoch boundary.
class BatchCycler {
public:
    BatchCycler(std::size_t count, Rng rng) : idx_(count), rng_(rng) {
        for (std::size_t i = 0; i < count; ++i) idx_[i] = i;
        shuffle();
    }

    std::vector<std::size_t> next(std::size_t batch) {
        std::vector<std::size_t> out;
        out.reserve(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            if (pos_ == idx_.size()) {
                shuffle();
                pos_ = 0;
            }
            out.push_back(idx_[pos_++]);
        }
        return out;
    }

private:
    void shuffle() {
        for (std::size_t i = idx_.size(); i > 1; --i) std::swap(idx_[i - 1], idx_[rng_.below(i)]);
    }

    std::vector<std::size_t> idx_;
    std::size_t pos_ = 0;
    Rng rng_;
};

void check_latents(const std::vector<Tensor>& latents, const WmConfig& cfg,
                   const std::string& what) {
    check_arg(!latents.empty(), what + ": empty latent set");
    for (const auto& z : latents)
        check_arg(z.ndim() == 3 && z.dim(0) == 4 && z.dim(1) == cfg.latent_h &&
                      z.dim(2) == cfg.latent_w,
                  what + ": latent shape mismatch, got " + z.shape_str());
}

ag::Var injected_slice(const ag::Var& z, int channel) {
    return channel == kInjectAll ? z : ag::slice_channels(z, channel, channel + 1);
}

std::size_t derive_epoch_steps(const TrainConfig& cfg, std::size_t dataset_size) {
    if (cfg.epoch_steps > 0) return cfg.epoch_steps;
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    return std::max<std::size_t>(1, (dataset_size + batch - 1) / batch);
}

}  // namespace

void TrainConfig::validate() const {
    check_arg(n >= 1, "train config: n must be >= 1");
    for (Real lr : {lr_msg_pre, lr_msg_formal, lr_couple_pre, lr_couple_formal, lr_latent_msg,
                    lr_latent_couple})
        check_arg(lr > 0.0, "train config: learning rates must be positive");
    for (Real tau : {tau1, tau2, tau3})
        check_arg(tau > 0.0 && tau < 1.0, "train config: thresholds must lie in (0,1)");
    for (Real a : {alpha1, alpha2, alpha3})
        check_arg(a > 0.0, "train config: loss weights must be positive");
    check_arg(batch_size >= 1, "train config: batch_size must be >= 1");
    check_arg(ema_decay > 0.0 && ema_decay < 1.0, "train config: ema_decay must lie in (0,1)");
    check_arg(stop_bitacc > 0.0 && stop_bitacc <= 1.0,
              "train config: stop_bitacc must lie in (0,1]");
    check_arg(max_steps1 >= 1 && max_steps2 >= 1 && max_steps3 >= 1,
              "train config: step budgets must be >= 1");
}

std::string TrainConfig::canonical_json() const {
    json j;
    j["alpha1"] = alpha1;
    j["alpha2"] = alpha2;
    j["alpha3"] = alpha3;
    j["batch_size"] = batch_size;
    j["ema_decay"] = ema_decay;
    j["epoch_steps"] = epoch_steps;
    j["lr_couple_formal"] = lr_couple_formal;
    j["lr_couple_pre"] = lr_couple_pre;
    j["lr_latent_couple"] = lr_latent_couple;
    j["lr_latent_msg"] = lr_latent_msg;
    j["lr_msg_formal"] = lr_msg_formal;
    j["lr_msg_pre"] = lr_msg_pre;
    j["max_steps1"] = max_steps1;
    j["max_steps2"] = max_steps2;
    j["max_steps3"] = max_steps3;
    j["n"] = n;
    j["seed"] = seed.value;
    j["stop_bitacc"] = stop_bitacc;
    j["tau1"] = tau1;
    j["tau2"] = tau2;
    j["tau3"] = tau3;
    return j.dump();
}

std::string TrainConfig::fingerprint() const {
    const std::string c = canonical_json();
    return fingerprint_hex(fnv1a64(c.data(), c.size()));
}

std::string TrainLog::to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "phase,step,loss,lz,li,lm,batch_bitacc,ema_bitacc,lm_branch,wall_seconds\n";
    for (const auto& r : records)
        out << r.phase << ',' << r.step << ',' << r.loss << ',' << r.lz << ',' << r.li << ','
            << r.lm << ',' << r.batch_bitacc << ',' << r.ema_bitacc << ',' << r.lm_branch << ','
            << r.wall_seconds << '\n';
    return out.str();
}

std::string TrainLog::summary_json() const {
    json phases = json::object();
    for (const auto& r : records) {
        auto& p = phases[r.phase];
        p["steps"] = p.contains("steps") ? p["steps"].get<std::size_t>() + 1 : 1;
        p["final_loss"] = r.loss;
        p["final_ema_bitacc"] = r.ema_bitacc;
        if (r.lm_branch == 'l' && !p.contains("lse_switch_step")) p["lse_switch_step"] = r.step;
    }
    json j;
    j["phases"] = phases;
    j["total_records"] = records.size();
    return j.dump();
}

bool TrainLog::same_trajectory(const TrainLog& other) const {
    if (records.size() != other.records.size()) return false;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& a = records[i];
        const auto& b = other.records[i];
        if (a.phase != b.phase || a.step != b.step || a.loss != b.loss || a.lz != b.lz ||
            a.li != b.li || a.lm != b.lm || a.batch_bitacc != b.batch_bitacc ||
            a.ema_bitacc != b.ema_bitacc || a.lm_branch != b.lm_branch)
            return false;
    }
    return true;
}

ag::Var loss_step1(const ag::Var& logits, const Tensor& bipolar_targets) {
    check_same_shape(logits->val, bipolar_targets, "loss_step1");
    return ag::mean_all(ag::square(ag::sub_const(logits, bipolar_targets)));
}

ag::Var loss_step2(const ag::Var& out, const ag::Var& target) {
    check_same_shape(out->val, target->val, "loss_step2");
    return ag::mean_all(ag::square(ag::sub(out, target)));
}

ag::Var loss_lz(const ag::Var& out, const ag::Var& target) { return loss_step2(out, target); }

ag::Var loss_lm_mse(const ag::Var& logits, const Tensor& bipolar_targets) {
    check_same_shape(logits->val, bipolar_targets, "loss_lm");
    return ag::mean_all(ag::square(ag::sub_const(logits, bipolar_targets)));
}

ag::Var loss_lm_lse(const ag::Var& logits, const Tensor& bipolar_targets) {
    check_same_shape(logits->val, bipolar_targets, "loss_lm");
    const auto d2 = ag::square(ag::sub_const(logits, bipolar_targets));
    return ag::mean_all(ag::log_(ag::row_sum(ag::exp_(d2))));
}

ag::Var loss_lm(const ag::Var& logits, const Tensor& bipolar_targets, Real ema_bitacc, Real tau3,
                char* branch_out) {
    const bool mse = ema_bitacc < tau3;
    if (branch_out != nullptr) *branch_out = mse ? 'm' : 'l';
    return mse ? loss_lm_mse(logits, bipolar_targets) : loss_lm_lse(logits, bipolar_targets);
}

void run_step1(WmModules& modules, const TrainConfig& cfg, TrainLog& log) {
    cfg.validate();
    check_arg(modules.cfg.n == cfg.n, "step1: bit-length mismatch between modules and config");
    nn::AdamW opt(modules.msg_params(), cfg.lr_msg_pre);
    Rng msg_rng(seed_split(cfg.seed, "step1-msgs"));
    EmaTracker ema{cfg.ema_decay};
    const auto t0 = Clock::now();

    for (std::size_t step = 0; step < cfg.max_steps1; ++step) {
        const MessageBatch batch = draw_batch(cfg.batch_size, cfg.n, msg_rng);
        const auto logits = modules.msg_dec(modules.msg_enc(ag::constant(batch.bipolar)));
        const auto loss = loss_step1(logits, batch.bipolar);
        ag::backward(loss);
        opt.step();
        opt.zero_grad();

        const Real acc = batch_bit_accuracy(logits->val, batch.messages);
        ema.observe(acc);
        log.add({"step1", step, loss->val.data[0], 0.0, 0.0, 0.0, acc, ema.value, '-',
                 seconds_since(t0)});
        if (ema.value > cfg.tau1) return;
    }
    throw TrainingBudgetExhausted("step1", static_cast<long>(cfg.max_steps1),
                                  "EMA bit accuracy never exceeded tau1", log);
}

void run_step2(WmModules& modules, const std::vector<Tensor>& latents, const TrainConfig& cfg,
               TrainLog& log) {
    cfg.validate();
    check_arg(modules.cfg.n == cfg.n, "step2: bit-length mismatch between modules and config");
    check_latents(latents, modules.cfg, "step2");
    nn::AdamW opt(modules.coupler_params(), cfg.lr_couple_pre);
    Rng msg_rng(seed_split(cfg.seed, "step2-msgs"));
    BatchCycler cycler(latents.size(), Rng(seed_split(cfg.seed, "step2-order")));
    const int channel = modules.cfg.injection_channel;
    const auto t0 = Clock::now();

    for (std::size_t step = 0; step < cfg.max_steps2; ++step) {
        const auto idx = cycler.next(static_cast<std::size_t>(cfg.batch_size));
        std::vector<Tensor> zs, planes;
        const MessageBatch batch = draw_batch(cfg.batch_size, cfg.n, msg_rng);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            zs.push_back(latents[idx[b]]);
            planes.push_back(modules.msg_enc.encode(batch.messages[b]));
        }
        const auto z = ag::constant(stack(zs));
        const auto mchan = ag::constant(stack(planes));
        const auto zp = couple_var(z, mchan, modules.coupler, channel);
        const auto loss = loss_step2(injected_slice(zp, channel), injected_slice(z, channel));
        ag::backward(loss);
        opt.step();
        opt.zero_grad();

        log.add({"step2", step, loss->val.data[0], 0.0, 0.0, 0.0, 0.0, 0.0, '-',
                 seconds_since(t0)});
        if (loss->val.data[0] < cfg.tau2) return;
    }
    throw TrainingBudgetExhausted("step2", static_cast<long>(cfg.max_steps2),
                                  "identity loss never dropped below tau2", log);
}

void run_step3(WmModules& modules, const ConvAutoencoder& ae, const std::vector<Tensor>& images,
               const TrainConfig& cfg, TrainLog& log, const PerceptualFn& perceptual) {
    cfg.validate();
    check_arg(modules.cfg.n == cfg.n, "step3: bit-length mismatch between modules and config");
    check_arg(!images.empty(), "step3: empty image set");
    check_arg(modules.cfg.latent_h == ae.config().latent_h() &&
                  modules.cfg.latent_w == ae.config().latent_w(),
              "step3: latent geometry mismatch between modules and autoencoder");
    if (!ae.trained()) throw InvalidStateError("step3 requires a trained autoencoder");
    const std::uint64_t ae_fp = ae.weights_fingerprint();

    const PerceptualFn li_fn = perceptual ? perceptual : default_perceptual();
    auto ae_params = ae.params();
    nn::set_trainable(ae_params, false);

    nn::AdamW opt_msg(modules.msg_params(), cfg.lr_msg_formal);
    nn::ParamList unet_params = modules.coupler_params();
    for (auto& p : modules.decoupler_params()) unet_params.push_back(p);
    nn::AdamW opt_unet(unet_params, cfg.lr_couple_formal);

    std::vector<Tensor> latents;
    latents.reserve(images.size());
    for (const auto& x : images) latents.push_back(ae.encode(x));

    Rng msg_rng(seed_split(cfg.seed, "step3-msgs"));
    BatchCycler cycler(images.size(), Rng(seed_split(cfg.seed, "step3-order")));
    const int channel = modules.cfg.injection_channel;
    const std::size_t epoch_steps = derive_epoch_steps(cfg, images.size());
    EmaTracker ema{cfg.ema_decay};
    std::size_t stop_at = SIZE_MAX;
    const auto t0 = Clock::now();

    for (std::size_t step = 0; step < cfg.max_steps3; ++step) {
        const auto idx = cycler.next(static_cast<std::size_t>(cfg.batch_size));
        std::vector<Tensor> zs, xs;
        for (std::size_t i : idx) {
            zs.push_back(latents[i]);
            xs.push_back(images[i]);
        }
        const MessageBatch batch = draw_batch(cfg.batch_size, cfg.n, msg_rng);

        const auto z = ag::constant(stack(zs));
        const auto x = ag::constant(stack(xs));
        const auto mchan = modules.msg_enc(ag::constant(batch.bipolar));
        const auto zp = couple_var(z, mchan, modules.coupler, channel);
        const auto lz = loss_lz(injected_slice(zp, channel), injected_slice(z, channel));
        const auto xt = ae.decode_var(zp);
        const auto li = li_fn(x, xt);
        const auto zt = ae.encode_var(xt);
        const auto feat = decouple_var(zt, modules.decoupler, channel);
        const auto logits = modules.msg_dec(feat);
        char branch = '-';
        const auto lm = loss_lm(logits, batch.bipolar, ema.primed ? ema.value : 0.0, cfg.tau3,
                                &branch);
        const auto total = ag::add(ag::add(ag::scale(lz, cfg.alpha1), ag::scale(li, cfg.alpha2)),
                                   ag::scale(lm, cfg.alpha3));
        ag::backward(total);
        opt_msg.step();
        opt_unet.step();
        opt_msg.zero_grad();
        opt_unet.zero_grad();

        const Real acc = batch_bit_accuracy(logits->val, batch.messages);
        ema.observe(acc);
        log.add({"step3", step, total->val.data[0], lz->val.data[0], li->val.data[0],
                 lm->val.data[0], acc, ema.value, branch, seconds_since(t0)});

        if (stop_at == SIZE_MAX && ema.value >= cfg.stop_bitacc)
            stop_at = step + epoch_steps;
        else if (step >= stop_at) {
            if (ae.weights_fingerprint() != ae_fp)
                throw InvalidStateError("autoencoder weights changed during step3");
            return;
        }
    }
    throw TrainingBudgetExhausted("step3", static_cast<long>(cfg.max_steps3),
                                  "EMA bit accuracy never reached the stop threshold", log);
}

void run_latent_strategy(WmModules& modules, const std::vector<Tensor>& latents,
                         const TrainConfig& cfg, TrainLog& log) {
    cfg.validate();
    check_arg(modules.cfg.n == cfg.n, "latent: bit-length mismatch between modules and config");
    check_latents(latents, modules.cfg, "latent strategy");

    nn::AdamW opt_msg(modules.msg_params(), cfg.lr_latent_msg);
    nn::ParamList unet_params = modules.coupler_params();
    for (auto& p : modules.decoupler_params()) unet_params.push_back(p);
    nn::AdamW opt_unet(unet_params, cfg.lr_latent_couple);

    Rng msg_rng(seed_split(cfg.seed, "latent-msgs"));
    BatchCycler cycler(latents.size(), Rng(seed_split(cfg.seed, "latent-order")));
    const int channel = modules.cfg.injection_channel;
    const std::size_t epoch_steps = derive_epoch_steps(cfg, latents.size());
    EmaTracker ema{cfg.ema_decay};
    std::size_t stop_at = SIZE_MAX;
    const auto t0 = Clock::now();

    for (std::size_t step = 0; step < cfg.max_steps3; ++step) {
        const auto idx = cycler.next(static_cast<std::size_t>(cfg.batch_size));
        std::vector<Tensor> zs;
        for (std::size_t i : idx) zs.push_back(latents[i]);
        const MessageBatch batch = draw_batch(cfg.batch_size, cfg.n, msg_rng);

        const auto z = ag::constant(stack(zs));
        const auto mchan = modules.msg_enc(ag::constant(batch.bipolar));
        const auto zp = couple_var(z, mchan, modules.coupler, channel);
        const auto lz = loss_lz(injected_slice(zp, channel), injected_slice(z, channel));
        const auto feat = decouple_var(zp, modules.decoupler, channel);
        const auto logits = modules.msg_dec(feat);
        char branch = '-';
        const auto lm = loss_lm(logits, batch.bipolar, ema.primed ? ema.value : 0.0, cfg.tau3,
                                &branch);
        const auto total = ag::add(ag::scale(lz, cfg.alpha1), ag::scale(lm, cfg.alpha3));
        ag::backward(total);
        opt_msg.step();
        opt_unet.step();
        opt_msg.zero_grad();
        opt_unet.zero_grad();

        const Real acc = batch_bit_accuracy(logits->val, batch.messages);
        ema.observe(acc);
        log.add({"latent", step, total->val.data[0], lz->val.data[0], 0.0, lm->val.data[0], acc,
                 ema.value, branch, seconds_since(t0)});

        if (stop_at == SIZE_MAX && ema.value >= cfg.stop_bitacc)
            stop_at = step + epoch_steps;
        else if (step >= stop_at)
            return;
    }
    throw TrainingBudgetExhausted("latent", static_cast<long>(cfg.max_steps3),
                                  "EMA bit accuracy never reached the stop threshold", log);
}

std::string to_string(TrainStrategy s) {
    switch (s) {
        case TrainStrategy::kProgressive: return "progressive";
        case TrainStrategy::kSkipStep1: return "skip_step1";
        case TrainStrategy::kSkipStep2: return "skip_step2";
        case TrainStrategy::kLatentOnly: return "latent_only";
    }
    throw std::invalid_argument("unknown training strategy");
}

std::pair<WatermarkBundle, TrainLog> train_watermark(const ConvAutoencoder& ae,
                                                     const std::vector<Tensor>& images,
                                                     const WmConfig& wm_cfg,
                                                     const TrainConfig& cfg,
                                                     TrainStrategy strategy,
                                                     const PerceptualFn& perceptual) {
    wm_cfg.validate();
    cfg.validate();
    check_arg(wm_cfg.n == cfg.n, "train_watermark: bit-length mismatch between configs");
    check_arg(wm_cfg.latent_h == ae.config().latent_h() &&
                  wm_cfg.latent_w == ae.config().latent_w(),
              "train_watermark: latent geometry mismatch");
    check_arg(!images.empty(), "train_watermark: empty image set");
    if (!ae.trained()) throw InvalidStateError("train_watermark requires a trained autoencoder");
    const std::uint64_t ae_fp = ae.weights_fingerprint();

    WmModules modules(wm_cfg);
    TrainLog log;

    const auto encode_all = [&] {
        std::vector<Tensor> latents;
        latents.reserve(images.size());
        for (const auto& x : images) latents.push_back(ae.encode(x));
        return latents;
    };

    switch (strategy) {
        case TrainStrategy::kProgressive:
            run_step1(modules, cfg, log);
            run_step2(modules, encode_all(), cfg, log);
            run_step3(modules, ae, images, cfg, log, perceptual);
            break;
        case TrainStrategy::kSkipStep1:
            run_step2(modules, encode_all(), cfg, log);
            run_step3(modules, ae, images, cfg, log, perceptual);
            break;
        case TrainStrategy::kSkipStep2:
            run_step1(modules, cfg, log);
            run_step3(modules, ae, images, cfg, log, perceptual);
            break;
        case TrainStrategy::kLatentOnly:
            run_latent_strategy(modules, encode_all(), cfg, log);
            break;
    }

    if (ae.weights_fingerprint() != ae_fp)
        throw InvalidStateError("autoencoder weights changed during watermark training");

    WatermarkBundle bundle(wm_cfg);
    bundle.modules = modules;
    bundle.ae_fingerprint = fingerprint_hex(ae_fp);
    nlohmann::json manifest;
    manifest["strategy"] = to_string(strategy);
    manifest["train_config"] = nlohmann::json::parse(cfg.canonical_json());
    manifest["wm_config"] = nlohmann::json::parse(wm_cfg.canonical_json());
    manifest["dataset_size"] = images.size();
    manifest["log_summary"] = nlohmann::json::parse(log.summary_json());
    bundle.train_manifest = manifest.dump();
    return {std::move(bundle), std::move(log)};
}

}  // namespace lw
