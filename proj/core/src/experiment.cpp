#include "lw/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lw {

namespace {

using json = nlohmann::json;

json synthetic_to_json(const SyntheticSpec& s) {
    return {{"count", s.count}, {"image_h", s.image_h}, {"image_w", s.image_w},
            {"seed", s.seed.value}};
}

SyntheticSpec synthetic_from_json(const json& j) {
    SyntheticSpec s;
    s.count = j.value("count", s.count);
    s.image_h = j.value("image_h", s.image_h);
    s.image_w = j.value("image_w", s.image_w);
    s.seed = RngSeed{j.value("seed", s.seed.value)};
    return s;
}

json ae_to_json(const AutoencoderConfig& c) {
    return {{"image_h", c.image_h},
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

AutoencoderConfig ae_from_json(const json& j) {
    AutoencoderConfig c;
    c.image_h = j.value("image_h", c.image_h);
    c.image_w = j.value("image_w", c.image_w);
    c.downsample_factor = j.value("downsample_factor", c.downsample_factor);
    c.latent_channels = j.value("latent_channels", c.latent_channels);
    c.base_width = j.value("base_width", c.base_width);
    c.extra_blocks = j.value("extra_blocks", c.extra_blocks);
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.calibrate_latents = j.value("calibrate_latents", c.calibrate_latents);
    c.canonicalize_channels = j.value("canonicalize_channels", c.canonicalize_channels);
    c.seed = RngSeed{j.value("seed", c.seed.value)};
    return c;
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.n = j.value("n", c.n);
    c.lr_msg_pre = j.value("lr_msg_pre", c.lr_msg_pre);
    c.lr_msg_formal = j.value("lr_msg_formal", c.lr_msg_formal);
    c.lr_couple_pre = j.value("lr_couple_pre", c.lr_couple_pre);
    c.lr_couple_formal = j.value("lr_couple_formal", c.lr_couple_formal);
    c.lr_latent_msg = j.value("lr_latent_msg", c.lr_latent_msg);
    c.lr_latent_couple = j.value("lr_latent_couple", c.lr_latent_couple);
    c.tau1 = j.value("tau1", c.tau1);
    c.tau2 = j.value("tau2", c.tau2);
    c.tau3 = j.value("tau3", c.tau3);
    c.alpha1 = j.value("alpha1", c.alpha1);
    c.alpha2 = j.value("alpha2", c.alpha2);
    c.alpha3 = j.value("alpha3", c.alpha3);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.ema_decay = j.value("ema_decay", c.ema_decay);
    c.stop_bitacc = j.value("stop_bitacc", c.stop_bitacc);
    c.max_steps1 = j.value("max_steps1", c.max_steps1);
    c.max_steps2 = j.value("max_steps2", c.max_steps2);
    c.max_steps3 = j.value("max_steps3", c.max_steps3);
    c.epoch_steps = j.value("epoch_steps", c.epoch_steps);
    c.seed = RngSeed{j.value("seed", c.seed.value)};
    return c;
}

struct SweepAccumulator {
    std::vector<Real> accs;
    std::vector<int> matches;
    Real ssim_sum = 0.0, psnr_sum = 0.0, mad_sum = 0.0;
    int failed = 0;

    void observe(Real acc, int matched, Real s, Real p, Real m) {
        accs.push_back(acc);
        matches.push_back(matched);
        ssim_sum += s;
        psnr_sum += p;
        mad_sum += m;
    }

    EvalRow finish(const std::string& name, const std::string& hash, int n, Real fpr) const {
        EvalRow row;
        row.attack = name;
        row.attack_hash = hash;
        row.n_bits = n;
        row.samples = static_cast<int>(accs.size());
        row.failed = failed;
        if (!accs.empty()) {
            Real mean = 0.0;
            for (Real a : accs) mean += a;
            mean /= static_cast<Real>(accs.size());
            Real var = 0.0;
            for (Real a : accs) var += (a - mean) * (a - mean);
            row.bitacc_mean = mean;
            row.bitacc_se = accs.size() > 1
                                ? std::sqrt(var / (static_cast<Real>(accs.size()) *
                                                   static_cast<Real>(accs.size() - 1)))
                                : 0.0;
            row.tpr = tpr_at_fpr(matches, n, fpr);
            row.ssim_mean = ssim_sum / static_cast<Real>(accs.size());
            row.psnr_mean = psnr_sum / static_cast<Real>(accs.size());
            row.mad_mean = mad_sum / static_cast<Real>(accs.size());
        }
        return row;
    }
};

}  // namespace

void ExperimentConfig::validate() const {
    synthetic.count > 0 ? void() : throw std::invalid_argument("experiment: synthetic count");
    ae.validate();
    wm.validate();
    train.validate();
    check_arg(wm.n == train.n, "experiment: wm and train bit lengths differ");
    check_arg(wm.latent_h == ae.latent_h() && wm.latent_w == ae.latent_w(),
              "experiment: watermark latent geometry does not match the autoencoder");
    check_arg(eval_sample >= 1, "experiment: eval_sample must be >= 1");
    check_arg(fpr > 0.0 && fpr < 1.0, "experiment: fpr must lie in (0,1)");
    check_arg(!n_list.empty(), "experiment: n_list must not be empty");
    for (int n : n_list) check_arg(n >= 1, "experiment: n_list entries must be >= 1");
}

std::string ExperimentConfig::canonical_json() const {
    json j;
    j["dataset_dir"] = dataset_dir;
    j["synthetic"] = synthetic_to_json(synthetic);
    j["output_dir"] = output_dir;
    j["ae"] = ae_to_json(ae);
    j["wm"] = json::parse(wm.canonical_json());
    j["train"] = json::parse(train.canonical_json());
    j["attack_suite_path"] = attack_suite_path;
    j["n_list"] = n_list;
    j["eval_sample"] = eval_sample;
    j["fpr"] = fpr;
    j["eval_seed"] = eval_seed.value;
    return j.dump();
}

std::string ExperimentConfig::fingerprint() const {
    const std::string c = canonical_json();
    return fingerprint_hex(fnv1a64(c.data(), c.size()));
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig cfg;
    cfg.dataset_dir = j.value("dataset_dir", cfg.dataset_dir);
    if (j.contains("synthetic")) cfg.synthetic = synthetic_from_json(j.at("synthetic"));
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("ae")) cfg.ae = ae_from_json(j.at("ae"));
    if (j.contains("wm")) cfg.wm = WmConfig::from_json(j.at("wm").dump());
    if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
    cfg.attack_suite_path = j.value("attack_suite_path", cfg.attack_suite_path);
    if (j.contains("n_list")) cfg.n_list = j.at("n_list").get<std::vector<int>>();
    cfg.eval_sample = j.value("eval_sample", cfg.eval_sample);
    cfg.fpr = j.value("fpr", cfg.fpr);
    cfg.eval_seed = RngSeed{j.value("eval_seed", cfg.eval_seed.value)};
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ArchiveError("cannot open experiment config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

Dataset load_experiment_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset_dir.empty()) {
        SyntheticSpec spec = cfg.synthetic;
        spec.image_h = cfg.ae.image_h;
        spec.image_w = cfg.ae.image_w;
        return make_synthetic_dataset(spec);
    }
    return load_folder_dataset(cfg.dataset_dir, cfg.ae.image_h, cfg.ae.image_w,
                               cfg.synthetic.seed);
}

std::vector<AttackSpec> load_experiment_suite(const ExperimentConfig& cfg) {
    if (cfg.attack_suite_path.empty()) return default_attack_suite();
    return load_attack_suite(cfg.attack_suite_path);
}

AttackerModels train_attacker_models(const std::vector<Tensor>& images,
                                     const AutoencoderConfig& base, RngSeed seed) {
    AutoencoderConfig c1 = base;
    c1.extra_blocks = 1;
    c1.seed = seed_split(seed, "attacker-1");
    AutoencoderConfig c2 = base;
    c2.base_width = std::max(4, base.base_width / 2);
    c2.seed = seed_split(seed, "attacker-2");
    return {train_autoencoder(images, c1).model, train_autoencoder(images, c2).model};
}

EvalReport run_attack_sweep(const WatermarkBundle& bundle, const ConvAutoencoder& ae,
                            const std::vector<AttackSpec>& suite, const AttackContext& ctx,
                            const std::vector<Tensor>& eval_images, int sample_count,
                            RngSeed seed, Real fpr) {
    check_arg(!eval_images.empty(), "attack sweep: empty evaluation set");
    check_arg(sample_count >= 1, "attack sweep: sample count must be >= 1");
    for (const auto& spec : suite) spec.validate();
    const std::uint64_t before = bundle.weights_fingerprint();

    Rng order_rng(seed_split(seed, "sweep-order"));
    std::vector<std::size_t> idx(eval_images.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[order_rng.below(i)]);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(sample_count)));

    Rng msg_rng(seed_split(seed, "sweep-msgs"));
    const int n = bundle.cfg.n;
    SweepAccumulator untouched;
    std::vector<SweepAccumulator> per_attack(suite.size());

    for (const std::size_t image_index : idx) {
        const Tensor& x = eval_images[image_index];
        BitMessage m;
        m.bits.resize(static_cast<std::size_t>(n));
        for (auto& b : m.bits) b = msg_rng.bit();

        Tensor vanilla, xw;
        try {
            vanilla = ae.reconstruct(x);
            xw = inject(x, m, bundle, ae);
            const DetectResult r = detect(xw, bundle, ae);
            untouched.observe(bit_accuracy(r.bits, m), matched_bits(r.bits, m),
                              ssim(xw, vanilla), psnr(xw, vanilla), mean_abs_diff(xw, vanilla));
        } catch (const std::exception&) {
            ++untouched.failed;
            for (auto& acc : per_attack) ++acc.failed;
            continue;
        }

        for (std::size_t a = 0; a < suite.size(); ++a) {
            try {
                const Tensor attacked = apply_attack(xw, suite[a], ctx);
                const DetectResult r = detect(attacked, bundle, ae);
                per_attack[a].observe(bit_accuracy(r.bits, m), matched_bits(r.bits, m),
                                      ssim(attacked, vanilla), psnr(attacked, vanilla),
                                      mean_abs_diff(attacked, vanilla));
            } catch (const std::exception&) {
                ++per_attack[a].failed;
            }
        }
    }

    EvalReport report;
    report.bundle_id = fingerprint_hex(bundle.weights_fingerprint());
    report.seed = seed.value;
    report.config_fingerprint = bundle.cfg.fingerprint();
    report.rows.push_back(untouched.finish("untouched", "-", n, fpr));
    for (std::size_t a = 0; a < suite.size(); ++a)
        report.rows.push_back(per_attack[a].finish(to_string(suite[a].kind),
                                                   suite[a].fingerprint(), n, fpr));
    if (bundle.weights_fingerprint() != before)
        throw InvalidStateError("attack sweep mutated the bundle");
    return report;
}

namespace {

ArmResult run_arm(const std::string& name, const WmConfig& wm_cfg, TrainStrategy strategy,
                  const Dataset& ds, const std::vector<Tensor>& train_images,
                  const ConvAutoencoder& ae, const std::vector<AttackSpec>& suite,
                  const AttackContext& ctx, const ExperimentConfig& cfg) {
    ArmResult arm;
    arm.arm = name;

    WmModules modules(wm_cfg);
    const auto encode_all = [&] {
        std::vector<Tensor> latents;
        latents.reserve(train_images.size());
        for (const auto& x : train_images) latents.push_back(ae.encode(x));
        return latents;
    };
    try {
        switch (strategy) {
            case TrainStrategy::kProgressive:
                run_step1(modules, cfg.train, arm.log);
                run_step2(modules, encode_all(), cfg.train, arm.log);
                run_step3(modules, ae, train_images, cfg.train, arm.log);
                break;
            case TrainStrategy::kSkipStep1:
                run_step2(modules, encode_all(), cfg.train, arm.log);
                run_step3(modules, ae, train_images, cfg.train, arm.log);
                break;
            case TrainStrategy::kSkipStep2:
                run_step1(modules, cfg.train, arm.log);
                run_step3(modules, ae, train_images, cfg.train, arm.log);
                break;
            case TrainStrategy::kLatentOnly:
                run_latent_strategy(modules, encode_all(), cfg.train, arm.log);
                break;
        }
    } catch (const TrainingBudgetExhausted& e) {
        arm.budget_exhausted = true;
        arm.failure = e.what();
        arm.log = e.log();
    }
    if (!arm.log.records.empty()) arm.final_ema_bitacc = arm.log.records.back().ema_bitacc;

    WatermarkBundle bundle(wm_cfg);
    bundle.modules = modules;
    bundle.ae_fingerprint = fingerprint_hex(ae.weights_fingerprint());
    json manifest;
    manifest["strategy"] = to_string(strategy);
    manifest["arm"] = name;
    manifest["budget_exhausted"] = arm.budget_exhausted;
    bundle.train_manifest = manifest.dump();

    arm.report = run_attack_sweep(bundle, ae, suite, ctx, ds.split_images(kSplitEval),
                                  cfg.eval_sample, cfg.eval_seed, cfg.fpr);
    arm.untouched_bitacc = arm.report.rows[0].bitacc_mean;
    arm.ssim_vs_vanilla = arm.report.rows[0].ssim_mean;
    Real sum = 0.0;
    for (std::size_t i = 1; i < arm.report.rows.size(); ++i) sum += arm.report.rows[i].bitacc_mean;
    arm.attacked_bitacc_avg =
        arm.report.rows.size() > 1 ? sum / static_cast<Real>(arm.report.rows.size() - 1) : 0.0;
    return arm;
}

}  // namespace

AblationReport run_channel_ablation(const Dataset& ds, const ConvAutoencoder& ae,
                                    const std::vector<AttackSpec>& suite,
                                    const AttackContext& ctx, const ExperimentConfig& cfg) {
    cfg.validate();
    AblationReport report;
    report.kind = "channels";
    report.config_fingerprint = cfg.fingerprint();
    report.seed = cfg.train.seed.value;
    const auto train_images = ds.split_images(kSplitTrain);
    for (int channel : {0, 1, 2, 3, kInjectAll}) {
        WmConfig wm = cfg.wm;
        wm.injection_channel = channel;
        const std::string name = channel == kInjectAll ? "all" : std::to_string(channel);
        report.arms.push_back(run_arm("channel_" + name, wm, TrainStrategy::kProgressive, ds,
                                      train_images, ae, suite, ctx, cfg));
    }
    return report;
}

AblationReport run_strategy_ablation(const Dataset& ds, const ConvAutoencoder& ae,
                                     const std::vector<AttackSpec>& suite,
                                     const AttackContext& ctx, const ExperimentConfig& cfg) {
    cfg.validate();
    AblationReport report;
    report.kind = "strategy";
    report.config_fingerprint = cfg.fingerprint();
    report.seed = cfg.train.seed.value;
    const auto train_images = ds.split_images(kSplitTrain);
    const std::pair<TrainStrategy, const char*> arms[] = {
        {TrainStrategy::kProgressive, "progressive"},
        {TrainStrategy::kSkipStep1, "skip_step1"},
        {TrainStrategy::kSkipStep2, "skip_step2"},
        {TrainStrategy::kLatentOnly, "latent_only"},
    };
    for (const auto& [strategy, name] : arms)
        report.arms.push_back(
            run_arm(name, cfg.wm, strategy, ds, train_images, ae, suite, ctx, cfg));
    return report;
}

AblationReport run_size_sweep(const Dataset& ds, const ConvAutoencoder& ae,
                              const std::vector<AttackSpec>& suite, const AttackContext& ctx,
                              const ExperimentConfig& cfg, std::vector<std::size_t> sizes) {
    cfg.validate();
    check_arg(!sizes.empty(), "size sweep: empty size list");
    check_arg(std::is_sorted(sizes.begin(), sizes.end()), "size sweep: sizes must ascend");
    check_arg(sizes.back() <= ds.images.size(), "size sweep: size exceeds the dataset");
    AblationReport report;
    report.kind = "size";
    report.config_fingerprint = cfg.fingerprint();
    report.seed = cfg.train.seed.value;
    for (const std::size_t size : sizes) {
        check_arg(size >= 1, "size sweep: sizes must be >= 1");
        const std::vector<Tensor> subset(ds.images.begin(),
                                         ds.images.begin() + static_cast<std::ptrdiff_t>(size));
        report.arms.push_back(run_arm("size_" + std::to_string(size), cfg.wm,
                                      TrainStrategy::kProgressive, ds, subset, ae, suite, ctx,
                                      cfg));
    }
    return report;
}

std::vector<std::size_t> default_size_sweep(std::size_t dataset_size) {
    std::vector<std::size_t> sizes;
    for (std::size_t s : {std::size_t{1}, std::size_t{10}, std::size_t{100}, std::size_t{1000},
                          std::size_t{2000}})
        if (s <= dataset_size) sizes.push_back(s);
    if (sizes.empty() || sizes.back() != dataset_size) sizes.push_back(dataset_size);
    return sizes;
}

std::string AblationReport::to_json() const {
    json j;
    j["kind"] = kind;
    j["config_fingerprint"] = config_fingerprint;
    j["seed"] = seed;
    j["arms"] = json::array();
    for (const auto& a : arms) {
        json arm;
        arm["arm"] = a.arm;
        arm["budget_exhausted"] = a.budget_exhausted;
        arm["failure"] = a.failure;
        arm["final_ema_bitacc"] = a.final_ema_bitacc;
        arm["untouched_bitacc"] = a.untouched_bitacc;
        arm["attacked_bitacc_avg"] = a.attacked_bitacc_avg;
        arm["ssim_vs_vanilla"] = a.ssim_vs_vanilla;
        arm["report"] = json::parse(a.report.to_json());
        arm["log_summary"] = json::parse(a.log.summary_json());
        j["arms"].push_back(std::move(arm));
    }
    return j.dump(2);
}

std::string AblationReport::loss_curves_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "arm,phase,step,loss,lz,li,lm,batch_bitacc,ema_bitacc,lm_branch\n";
    for (const auto& a : arms)
        for (const auto& r : a.log.records)
            os << a.arm << ',' << r.phase << ',' << r.step << ',' << r.loss << ',' << r.lz << ','
               << r.li << ',' << r.lm << ',' << r.batch_bitacc << ',' << r.ema_bitacc << ','
               << r.lm_branch << '\n';
    return os.str();
}

}  // namespace lw
