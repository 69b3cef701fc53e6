#pragma once

#include <string>
#include <vector>

#include "lw/autoencoder.hpp"
#include "lw/bundle.hpp"
#include "lw/perceptual.hpp"
#include "lw/wm.hpp"

namespace lw {

struct TrainConfig {
    int n = 48;
    Real lr_msg_pre = 1e-4;     // message networks, pretrain
    Real lr_msg_formal = 1e-5;  // message networks, joint phase
    Real lr_couple_pre = 1e-3;  // coupler, identity pretrain
    Real lr_couple_formal = 1e-5;  // coupler + decoupler, joint phase
    // The latent-strategy baseline skips both pretrains, so each module group
    // starts from scratch at its pretrain rate.
    Real lr_latent_msg = 1e-4;
    Real lr_latent_couple = 1e-3;
    Real tau1 = 0.990;  // Step-1 gate: EMA bit accuracy must exceed this
    Real tau2 = 0.045;  // Step-2 gate: batch identity loss must drop below this
    Real tau3 = 0.900;  // joint phase: message-loss branch switch
    Real alpha1 = 1.5, alpha2 = 1.0, alpha3 = 1.0;
    int batch_size = 2;
    Real ema_decay = 0.99;
    Real stop_bitacc = 0.99;  // joint phase trains one more epoch after EMA reaches this
    std::size_t max_steps1 = 50000;
    std::size_t max_steps2 = 20000;
    std::size_t max_steps3 = 100000;
    std::size_t epoch_steps = 0;  // joint-phase epoch length; 0 derives it from the dataset
    RngSeed seed{1};

    void validate() const;
    std::string canonical_json() const;
    std::string fingerprint() const;
};

// Initialized to the first observation, then v <- d*v + (1-d)*x.
struct EmaTracker {
    Real decay = 0.99;
    bool primed = false;
    Real value = 0.0;

    void observe(Real x) {
        value = primed ? decay * value + (1.0 - decay) * x : x;
        primed = true;
    }
};

// 'm': per-bit MSE branch; 'l': log-sum-exp branch; '-': phase without it.
struct TrainRecord {
    std::string phase;
    std::size_t step = 0;
    Real loss = 0.0;
    Real lz = 0.0, li = 0.0, lm = 0.0;
    Real batch_bitacc = 0.0;
    Real ema_bitacc = 0.0;
    char lm_branch = '-';
    Real wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<TrainRecord> records;

    void add(TrainRecord r) { records.push_back(std::move(r)); }
    std::string to_csv() const;
    std::string summary_json() const;
    // Equality of everything except wall time.
    bool same_trajectory(const TrainLog& other) const;
};

// Budget exhaustion that hands the partial log back to the caller.
class TrainingBudgetExhausted : public PhaseBudgetExhausted {
public:
    TrainingBudgetExhausted(std::string phase, long steps, std::string detail, TrainLog log)
        : PhaseBudgetExhausted(std::move(phase), steps, std::move(detail)),
          log_(std::move(log)) {}
    const TrainLog& log() const { return log_; }

private:
    TrainLog log_;
};

// --- loss functionals (targets are constants; inputs carry gradients) ---

// Mean over batch and bits of squared bipolar error.
ag::Var loss_step1(const ag::Var& logits, const Tensor& bipolar_targets);
// Per-element mean squared difference (identity pretrain and latent loss).
ag::Var loss_step2(const ag::Var& out, const ag::Var& target);
ag::Var loss_lz(const ag::Var& out, const ag::Var& target);
ag::Var loss_lm_mse(const ag::Var& logits, const Tensor& bipolar_targets);
// Per-sample log sum_k exp((target_k - logit_k)^2), averaged over the batch.
ag::Var loss_lm_lse(const ag::Var& logits, const Tensor& bipolar_targets);
// Branches on the EMA bit accuracy against tau3; reports the branch taken.
ag::Var loss_lm(const ag::Var& logits, const Tensor& bipolar_targets, Real ema_bitacc, Real tau3,
                char* branch_out = nullptr);

// --- training phases (modules are updated in place; log is appended) ---

// Message autoencoding pretrain on random messages; gates on EMA > tau1.
void run_step1(WmModules& modules, const TrainConfig& cfg, TrainLog& log);

// Coupler identity pretrain on dataset latents; gates on batch loss < tau2.
void run_step2(WmModules& modules, const std::vector<Tensor>& latents, const TrainConfig& cfg,
               TrainLog& log);

// Joint phase: couple -> decode -> encode -> decouple -> decode_message with
// the autoencoder frozen; stops one epoch after EMA reaches stop_bitacc.
void run_step3(WmModules& modules, const ConvAutoencoder& ae, const std::vector<Tensor>& images,
               const TrainConfig& cfg, TrainLog& log, const PerceptualFn& perceptual = {});

// Degraded baseline: no pretraining, latents fed straight to the decoupler,
// no pixel-space term.
void run_latent_strategy(WmModules& modules, const std::vector<Tensor>& latents,
                         const TrainConfig& cfg, TrainLog& log);

enum class TrainStrategy { kProgressive, kSkipStep1, kSkipStep2, kLatentOnly };
std::string to_string(TrainStrategy s);

// End-to-end driver: runs the phases the strategy calls for and assembles a
// bundle bound to the autoencoder's weights.
std::pair<WatermarkBundle, TrainLog> train_watermark(const ConvAutoencoder& ae,
                                                     const std::vector<Tensor>& images,
                                                     const WmConfig& wm_cfg,
                                                     const TrainConfig& cfg,
                                                     TrainStrategy strategy,
                                                     const PerceptualFn& perceptual = {});

}  // namespace lw
