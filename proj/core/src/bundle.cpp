#include "lw/bundle.hpp"

namespace lw {

Archive WatermarkBundle::to_archive() const {
    Archive a;
    a.kind = "watermark-bundle";
    a.config_fingerprint = cfg.fingerprint();
    a.meta["config_json"] = cfg.canonical_json();
    a.meta["ae_fingerprint"] = ae_fingerprint;
    a.meta["train_manifest"] = train_manifest;
    for (const auto& p : modules.params()) a.add(p.name, p.var->val);
    return a;
}

WatermarkBundle WatermarkBundle::from_archive(const Archive& a) {
    if (a.kind != "watermark-bundle")
        throw ArchiveError("expected a watermark-bundle archive, got '" + a.kind + "'");
    WatermarkBundle bundle(WmConfig::from_json(a.meta.at("config_json")));
    bundle.ae_fingerprint = a.meta.count("ae_fingerprint") ? a.meta.at("ae_fingerprint") : "";
    bundle.train_manifest = a.meta.count("train_manifest") ? a.meta.at("train_manifest") : "";
    for (auto& p : bundle.modules.params()) {
        const Tensor& stored = a.get(p.name);
        check_same_shape(p.var->val, stored, "bundle load");
        p.var->val = stored;
    }
    return bundle;
}

}  // namespace lw
