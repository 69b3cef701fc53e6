#include "lw/training.hpp"

#include <algorithm>
#include <cmath>

#include "framework.hpp"
#include "gradcheck.hpp"

using namespace lw;

namespace {

WmConfig small_wm_config() {
    WmConfig cfg;
    cfg.n = 8;
    cfg.latent_h = 4;
    cfg.latent_w = 4;
    cfg.msg_hidden = 32;
    cfg.unet_base = 8;
    return cfg;
}

TrainConfig small_train_config() {
    TrainConfig cfg;
    cfg.n = 8;
    return cfg;
}

std::vector<Tensor> random_latents(int count, int h, int w, RngSeed seed) {
    Rng rng(seed);
    std::vector<Tensor> out;
    for (int i = 0; i < count; ++i) {
        Tensor z({4, h, w});
        for (auto& v : z.data) v = rng.uniform(-1.0, 1.0);
        out.push_back(std::move(z));
    }
    return out;
}

}  // namespace

TEST_CASE(config_validation_and_fingerprint) {
    TrainConfig cfg;
    cfg.validate();

    TrainConfig bad = cfg;
    bad.tau1 = 1.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.lr_msg_pre = 0.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.alpha2 = -1.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.batch_size = 0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.ema_decay = 1.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    REQUIRE(cfg.fingerprint() == TrainConfig{}.fingerprint());
    TrainConfig other = cfg;
    other.alpha1 = 2.0;
    REQUIRE(other.fingerprint() != cfg.fingerprint());
}

TEST_CASE(pretrain_message_loss_matches_hand_computation) {
    Tensor logits({2, 2});
    logits.data = {0.5, -1.0, -1.0, 1.0};
    Tensor targets({2, 2});
    targets.data = {1.0, -1.0, -1.0, -1.0};
    const auto loss = loss_step1(ag::constant(logits), targets);
    REQUIRE_CLOSE(loss->val.data[0], 1.0625, 1e-12);
}

TEST_CASE(identity_loss_is_the_per_element_mean) {
    Tensor out({2, 1, 2, 2}), target({2, 1, 2, 2});
    const Real d0 = std::sqrt(0.02), d1 = std::sqrt(0.06);
    for (int i = 0; i < 4; ++i) {
        out.data[static_cast<std::size_t>(i)] = d0;
        out.data[static_cast<std::size_t>(4 + i)] = 1.0 + d1;
        target.data[static_cast<std::size_t>(i)] = 0.0;
        target.data[static_cast<std::size_t>(4 + i)] = 1.0;
    }
    const auto loss = loss_step2(ag::constant(out), ag::constant(target));
    REQUIRE_CLOSE(loss->val.data[0], 0.04, 1e-12);
}

TEST_CASE(log_sum_exp_branch_matches_hand_computation) {
    Tensor logits({2, 8}), targets({2, 8});
    for (int i = 0; i < 16; ++i) {
        const Real t = (i % 3 == 0) ? 1.0 : -1.0;
        logits.data[static_cast<std::size_t>(i)] = t;
        targets.data[static_cast<std::size_t>(i)] = t;
    }
    const auto loss = loss_lm_lse(ag::constant(logits), targets);
    REQUIRE_CLOSE(loss->val.data[0], std::log(8.0), 1e-12);
}

TEST_CASE(message_loss_branches_on_the_tracker) {
    Rng rng(RngSeed{3});
    Tensor logits({2, 8}), targets({2, 8});
    for (auto& v : logits.data) v = rng.uniform(-1.0, 1.0);
    for (auto& v : targets.data) v = rng.bit() ? 1.0 : -1.0;

    char branch = '?';
    const auto below = loss_lm(ag::constant(logits), targets, 0.5, 0.9, &branch);
    REQUIRE(branch == 'm');
    REQUIRE(below->val.data[0] == loss_lm_mse(ag::constant(logits), targets)->val.data[0]);

    const auto at = loss_lm(ag::constant(logits), targets, 0.9, 0.9, &branch);
    REQUIRE(branch == 'l');
    REQUIRE(at->val.data[0] == loss_lm_lse(ag::constant(logits), targets)->val.data[0]);
}

TEST_CASE(loss_gradients_match_finite_differences) {
    Rng rng(RngSeed{5});
    const Tensor logits = gradcheck::random_tensor({2, 8}, rng);
    Tensor targets({2, 8});
    for (auto& v : targets.data) v = rng.bit() ? 1.0 : -1.0;

    REQUIRE(gradcheck::max_rel_err(
                [&](const std::vector<ag::Var>& in) { return loss_step1(in[0], targets); },
                {logits}) < 1e-6);
    REQUIRE(gradcheck::max_rel_err(
                [&](const std::vector<ag::Var>& in) { return loss_lm_lse(in[0], targets); },
                {logits}) < 1e-6);

    const Tensor out = gradcheck::random_tensor({2, 1, 3, 3}, rng);
    const Tensor tgt = gradcheck::random_tensor({2, 1, 3, 3}, rng);
    REQUIRE(gradcheck::max_rel_err(
                [](const std::vector<ag::Var>& in) { return loss_step2(in[0], in[1]); },
                {out, tgt}) < 1e-6);
}

TEST_CASE(ema_tracker_seeds_then_decays) {
    EmaTracker ema{0.9};
    REQUIRE(!ema.primed);
    ema.observe(0.5);
    REQUIRE(ema.primed);
    REQUIRE_CLOSE(ema.value, 0.5, 1e-15);
    ema.observe(1.0);
    REQUIRE_CLOSE(ema.value, 0.9 * 0.5 + 0.1 * 1.0, 1e-15);
}

TEST_CASE(message_pretrain_converges_and_is_deterministic) {
    const WmConfig wm = small_wm_config();
    TrainConfig cfg = small_train_config();
    cfg.lr_msg_pre = 1e-3;
    cfg.tau1 = 0.95;
    cfg.batch_size = 4;
    cfg.max_steps1 = 5000;

    WmModules a(wm);
    TrainLog log_a;
    run_step1(a, cfg, log_a);
    REQUIRE(!log_a.records.empty());
    REQUIRE(log_a.records.back().ema_bitacc > cfg.tau1);
    REQUIRE(log_a.records.back().phase == "step1");

    WmModules b(wm);
    TrainLog log_b;
    run_step1(b, cfg, log_b);
    REQUIRE(log_a.same_trajectory(log_b));

    TrainConfig reseeded = cfg;
    reseeded.seed = RngSeed{99};
    WmModules c(wm);
    TrainLog log_c;
    run_step1(c, reseeded, log_c);
    REQUIRE(!log_a.same_trajectory(log_c));
}

TEST_CASE(identity_pretrain_reaches_its_gate) {
    const WmConfig wm = small_wm_config();
    TrainConfig cfg = small_train_config();
    cfg.lr_couple_pre = 1e-3;
    cfg.max_steps2 = 5000;

    WmModules m(wm);
    TrainLog log;
    run_step2(m, random_latents(8, wm.latent_h, wm.latent_w, RngSeed{31}), cfg, log);
    REQUIRE(!log.records.empty());
    REQUIRE(log.records.back().loss < cfg.tau2);
    REQUIRE(log.records.back().phase == "step2");
}

TEST_CASE(budget_exhaustion_hands_back_the_log) {
    const WmConfig wm = small_wm_config();
    TrainConfig cfg = small_train_config();
    cfg.max_steps1 = 3;
    cfg.tau1 = 0.9999;

    WmModules m(wm);
    TrainLog log;
    bool thrown = false;
    try {
        run_step1(m, cfg, log);
    } catch (const TrainingBudgetExhausted& e) {
        thrown = true;
        REQUIRE(e.phase() == "step1");
        REQUIRE(e.steps() == 3);
        REQUIRE(e.log().records.size() == 3);
    }
    REQUIRE(thrown);
    REQUIRE(log.records.size() == 3);
}

TEST_CASE(joint_phase_runs_the_full_graph) {
    AutoencoderConfig ae_cfg;
    ae_cfg.image_h = ae_cfg.image_w = 32;
    ae_cfg.base_width = 8;
    ae_cfg.epochs = 2;
    ae_cfg.batch_size = 4;
    ae_cfg.holdout_fraction = 0.25;
    Rng rng(RngSeed{41});
    std::vector<Tensor> images;
    for (int i = 0; i < 8; ++i) {
        Tensor x({3, 32, 32});
        for (auto& v : x.data) v = rng.uniform(0.0, 1.0);
        images.push_back(std::move(x));
    }
    const auto trained = train_autoencoder(images, ae_cfg);

    WmConfig wm = small_wm_config();
    wm.latent_h = wm.latent_w = 4;
    TrainConfig cfg = small_train_config();
    cfg.max_steps3 = 5;
    cfg.stop_bitacc = 1.0;

    WmModules m(wm);
    TrainLog log;
    const auto fp = trained.model.weights_fingerprint();
    bool thrown = false;
    try {
        run_step3(m, trained.model, images, cfg, log);
    } catch (const TrainingBudgetExhausted& e) {
        thrown = true;
        REQUIRE(e.phase() == "step3");
    }
    REQUIRE(thrown);
    REQUIRE(log.records.size() == 5);
    for (const auto& r : log.records) {
        REQUIRE(r.phase == "step3");
        REQUIRE(r.lm_branch == 'm');
        REQUIRE(r.li > 0.0);
        REQUIRE(r.loss > 0.0);
    }
    REQUIRE(trained.model.weights_fingerprint() == fp);

    WmModules m2(wm);
    TrainLog log2;
    try {
        run_step3(m2, trained.model, images, cfg, log2);
    } catch (const TrainingBudgetExhausted&) {
    }
    REQUIRE(log.same_trajectory(log2));
}

TEST_CASE(latent_strategy_skips_the_image_space_term) {
    const WmConfig wm = small_wm_config();
    TrainConfig cfg = small_train_config();
    cfg.max_steps3 = 5;
    cfg.stop_bitacc = 1.0;

    WmModules m(wm);
    TrainLog log;
    bool thrown = false;
    try {
        run_latent_strategy(m, random_latents(6, wm.latent_h, wm.latent_w, RngSeed{43}), cfg,
                            log);
    } catch (const TrainingBudgetExhausted& e) {
        thrown = true;
        REQUIRE(e.phase() == "latent");
    }
    REQUIRE(thrown);
    REQUIRE(log.records.size() == 5);
    for (const auto& r : log.records) {
        REQUIRE(r.phase == "latent");
        REQUIRE(r.li == 0.0);
    }
}

TEST_CASE(log_serializes_and_compares) {
    TrainLog log;
    log.add({"step1", 0, 1.5, 0.0, 0.0, 0.0, 0.5, 0.5, '-', 0.1});
    log.add({"step3", 1, 0.5, 0.2, 0.1, 0.2, 0.9, 0.8, 'm', 0.2});
    log.add({"step3", 2, 0.4, 0.2, 0.1, 0.1, 0.95, 0.91, 'l', 0.3});

    const std::string csv = log.to_csv();
    REQUIRE(csv.find("phase,step,loss,lz,li,lm,batch_bitacc,ema_bitacc,lm_branch,wall_seconds") ==
            0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 4);

    const std::string summary = log.summary_json();
    REQUIRE(summary.find("\"lse_switch_step\":2") != std::string::npos);

    TrainLog same = log;
    same.records[1].wall_seconds = 99.0;
    REQUIRE(log.same_trajectory(same));
    TrainLog diff = log;
    diff.records[1].lm = 0.3;
    REQUIRE(!log.same_trajectory(diff));
}

TEST_MAIN()
