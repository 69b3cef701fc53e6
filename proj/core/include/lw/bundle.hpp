#pragma once

#include <string>

#include "lw/archive.hpp"
#include "lw/wm.hpp"

namespace lw {

// A trained watermark: the four networks plus the identity of the autoencoder
// they were trained against. Copies share weight storage.
struct WatermarkBundle {
    WmConfig cfg;
    std::string ae_fingerprint;  // hex fingerprint of the paired autoencoder's weights
    std::string train_manifest;  // JSON summary of the run that produced it
    WmModules modules;

    explicit WatermarkBundle(const WmConfig& config) : cfg(config), modules(config) {}

    std::uint64_t weights_fingerprint() const { return to_archive().weights_fingerprint(); }
    Archive to_archive() const;
    static WatermarkBundle from_archive(const Archive& a);
    void save(const std::string& path) const { to_archive().save(path); }
    static WatermarkBundle load(const std::string& path) {
        return from_archive(Archive::load(path));
    }
};

}  // namespace lw
