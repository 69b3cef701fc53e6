#include "lw/bundle.hpp"

#include <cmath>
#include <cstdio>

#include "framework.hpp"

using namespace lw;

namespace {

WmConfig small_config() {
    WmConfig cfg;
    cfg.n = 8;
    cfg.latent_h = 4;
    cfg.latent_w = 4;
    cfg.msg_hidden = 32;
    cfg.unet_base = 8;
    return cfg;
}

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE(bundle_round_trips_through_disk) {
    WatermarkBundle bundle(small_config());
    bundle.ae_fingerprint = "00deadbeef00cafe";
    bundle.train_manifest = "{\"strategy\":\"progressive\"}";

    const TempFile tmp("/tmp/lw_test_bundle.lwa");
    bundle.save(tmp.path);
    const WatermarkBundle back = WatermarkBundle::load(tmp.path);

    REQUIRE(back.cfg.canonical_json() == bundle.cfg.canonical_json());
    REQUIRE(back.ae_fingerprint == bundle.ae_fingerprint);
    REQUIRE(back.train_manifest == bundle.train_manifest);
    REQUIRE(back.weights_fingerprint() == bundle.weights_fingerprint());

    const auto pa = bundle.modules.params(), pb = back.modules.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        REQUIRE(pa[i].name == pb[i].name);
        for (std::size_t k = 0; k < pa[i].var->val.numel(); ++k) {
            const Real a = pa[i].var->val.data[k], b = pb[i].var->val.data[k];
            REQUIRE(std::fabs(a - b) <= 1e-6 * std::max(1.0, std::fabs(a)));
        }
    }

    bundle.save(tmp.path);
    const WatermarkBundle again = WatermarkBundle::load(tmp.path);
    REQUIRE(again.weights_fingerprint() == back.weights_fingerprint());
}

TEST_CASE(bundle_rejects_foreign_archives) {
    Archive a;
    a.kind = "autoencoder";
    REQUIRE_THROWS_AS(WatermarkBundle::from_archive(a), ArchiveError);

    WatermarkBundle bundle(small_config());
    Archive ok = bundle.to_archive();
    REQUIRE(ok.kind == "watermark-bundle");
    ok.entries.pop_back();
    REQUIRE_THROWS_AS(WatermarkBundle::from_archive(ok), ArchiveError);
}

TEST_CASE(copies_share_trained_weights) {
    WatermarkBundle bundle(small_config());
    const WatermarkBundle copy = bundle;
    bundle.modules.params()[0].var->val.data[0] = 123.0;
    REQUIRE(copy.modules.params()[0].var->val.data[0] == 123.0);
}

TEST_MAIN()
