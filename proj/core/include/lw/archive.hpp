#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lw/tensor.hpp"

namespace lw {

// Weight archive: one file holding a JSON manifest (kind, fingerprints, meta,
// entry names/shapes/offsets) followed by a raw little-endian f32 blob.
// Values live in memory as double but persist as f32, so save -> load -> save
// is byte-identical.
struct Archive {
    std::string kind;
    std::string config_fingerprint;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> entries;

    void add(const std::string& name, const Tensor& t) { entries.emplace_back(name, t); }
    const Tensor& get(const std::string& name) const;  // ArchiveError if absent
    bool has(const std::string& name) const;

    // FNV-1a over entry names, shapes, and f32 payload bytes, in order.
    std::uint64_t weights_fingerprint() const;

    void save(const std::string& path) const;
    static Archive load(const std::string& path);
};

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string fingerprint_hex(std::uint64_t fp);

// Round a double tensor through f32, exactly as the archive stores it.
void quantize_f32(Tensor& t);

}  // namespace lw
