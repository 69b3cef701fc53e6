#pragma once

#include <string>
#include <vector>

#include "lw/attacks.hpp"
#include "lw/dataset.hpp"
#include "lw/pipeline.hpp"
#include "lw/training.hpp"

namespace lw {

// Everything a run needs; a run is reproducible from this plus nothing else.
struct ExperimentConfig {
    std::string dataset_dir;  // empty -> synthetic dataset
    SyntheticSpec synthetic;
    std::string output_dir = "reports";
    AutoencoderConfig ae;
    WmConfig wm;
    TrainConfig train;
    std::string attack_suite_path;  // empty -> built-in suite
    std::vector<int> n_list = {48, 56, 64, 128};
    int eval_sample = 500;
    Real fpr = 0.01;
    RngSeed eval_seed{99};

    void validate() const;
    std::string canonical_json() const;
    std::string fingerprint() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::string& path);
};

Dataset load_experiment_dataset(const ExperimentConfig& cfg);
std::vector<AttackSpec> load_experiment_suite(const ExperimentConfig& cfg);

// Stand-ins for third-party regeneration models: two variants of the pipeline
// architecture trained on the same data with independent seeds.
struct AttackerModels {
    ConvAutoencoder alt1, alt2;

    AttackContext context(const ConvAutoencoder& primary) const {
        AttackContext ctx;
        ctx.primary_ae = &primary;
        ctx.alt_ae_1 = &alt1;
        ctx.alt_ae_2 = &alt2;
        return ctx;
    }
};

AttackerModels train_attacker_models(const std::vector<Tensor>& images,
                                     const AutoencoderConfig& base, RngSeed seed);

// Injects a fresh random message per image, applies every attack, detects,
// and aggregates. Row 0 is the untouched watermarked image; quality columns
// compare against the vanilla reconstruction of the same image.
EvalReport run_attack_sweep(const WatermarkBundle& bundle, const ConvAutoencoder& ae,
                            const std::vector<AttackSpec>& suite, const AttackContext& ctx,
                            const std::vector<Tensor>& eval_images, int sample_count,
                            RngSeed seed, Real fpr = 0.01);

// One trained-and-evaluated variant in an ablation.
struct ArmResult {
    std::string arm;
    bool budget_exhausted = false;
    std::string failure;
    Real final_ema_bitacc = 0.0;
    Real untouched_bitacc = 0.0;
    Real attacked_bitacc_avg = 0.0;
    Real ssim_vs_vanilla = 0.0;
    EvalReport report;
    TrainLog log;
};

struct AblationReport {
    std::string kind;
    std::string config_fingerprint;
    std::uint64_t seed = 0;
    std::vector<ArmResult> arms;

    std::string to_json() const;
    // Long-form per-step records of every arm, for loss/accuracy curves.
    std::string loss_curves_csv() const;
};

// Trains one bundle per injection-channel option (0, 1, 2, 3, all) with
// identical seeds and budgets; a budget-exhausted arm is still evaluated with
// whatever the training produced.
AblationReport run_channel_ablation(const Dataset& ds, const ConvAutoencoder& ae,
                                    const std::vector<AttackSpec>& suite,
                                    const AttackContext& ctx, const ExperimentConfig& cfg);

// Trains the progressive, skip-step-1, skip-step-2, and latent-only arms.
AblationReport run_strategy_ablation(const Dataset& ds, const ConvAutoencoder& ae,
                                     const std::vector<AttackSpec>& suite,
                                     const AttackContext& ctx, const ExperimentConfig& cfg);

// Trains one progressive bundle per training-set size.
AblationReport run_size_sweep(const Dataset& ds, const ConvAutoencoder& ae,
                              const std::vector<AttackSpec>& suite, const AttackContext& ctx,
                              const ExperimentConfig& cfg, std::vector<std::size_t> sizes);

std::vector<std::size_t> default_size_sweep(std::size_t dataset_size);

}  // namespace lw
