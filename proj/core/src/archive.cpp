#include "lw/archive.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>

namespace lw {

namespace {

constexpr char kMagic[8] = {'L', 'W', 'A', 'R', 'C', 'H', '1', '\n'};

std::vector<float> to_f32(const Tensor& t) {
    std::vector<float> out(t.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(t.data[i]);
    return out;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fingerprint_hex(std::uint64_t fp) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[fp & 0xf];
        fp >>= 4;
    }
    return s;
}

void quantize_f32(Tensor& t) {
    for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

const Tensor& Archive::get(const std::string& name) const {
    for (const auto& [n, t] : entries) {
        if (n == name) return t;
    }
    throw ArchiveError("missing entry '" + name + "' in " + kind + " archive");
}

bool Archive::has(const std::string& name) const {
    for (const auto& [n, t] : entries) {
        if (n == name) return true;
    }
    return false;
}

std::uint64_t Archive::weights_fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : entries) {
        h = fnv1a64(name.data(), name.size(), h);
        for (int d : t.shape) {
            const std::uint32_t le = static_cast<std::uint32_t>(d);
            h = fnv1a64(&le, sizeof le, h);
        }
        const auto f = to_f32(t);
        h = fnv1a64(f.data(), f.size() * sizeof(float), h);
    }
    return h;
}

void Archive::save(const std::string& path) const {
    nlohmann::json manifest;
    manifest["kind"] = kind;
    manifest["config_fingerprint"] = config_fingerprint;
    manifest["weights_fingerprint"] = fingerprint_hex(weights_fingerprint());
    manifest["dtype"] = "f32le";
    manifest["meta"] = meta;
    manifest["entries"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : entries) {
        manifest["entries"].push_back(
            {{"name", name}, {"shape", t.shape}, {"offset", offset}, {"count", t.numel()}});
        offset += t.numel();
    }
    const std::string mtext = manifest.dump();
    const std::uint64_t mlen = mtext.size();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ArchiveError("cannot open " + path + " for writing");
    f.write(kMagic, sizeof kMagic);
    f.write(reinterpret_cast<const char*>(&mlen), sizeof mlen);
    f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const auto& [name, t] : entries) {
        const auto data = to_f32(t);
        f.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float)));
    }
    if (!f) throw ArchiveError("write failed for " + path);
}

Archive Archive::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ArchiveError("cannot open " + path);
    char magic[8];
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw ArchiveError(path + " is not a weight archive");
    std::uint64_t mlen = 0;
    f.read(reinterpret_cast<char*>(&mlen), sizeof mlen);
    std::string mtext(mlen, '\0');
    f.read(mtext.data(), static_cast<std::streamsize>(mlen));
    if (!f) throw ArchiveError(path + ": truncated manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mtext);
    } catch (const nlohmann::json::exception& e) {
        throw ArchiveError(path + ": bad manifest: " + e.what());
    }
    Archive a;
    a.kind = manifest.at("kind").get<std::string>();
    a.config_fingerprint = manifest.at("config_fingerprint").get<std::string>();
    if (manifest.contains("meta"))
        a.meta = manifest.at("meta").get<std::map<std::string, std::string>>();
    for (const auto& e : manifest.at("entries")) {
        const auto name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<std::vector<int>>();
        const auto count = e.at("count").get<std::size_t>();
        if (Tensor::numel_of(shape) != count)
            throw ArchiveError(path + ": entry '" + name + "' shape/count mismatch");
        std::vector<float> buf(count);
        f.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(count * sizeof(float)));
        if (!f) throw ArchiveError(path + ": truncated payload at '" + name + "'");
        Tensor t(shape);
        for (std::size_t i = 0; i < count; ++i) t.data[i] = buf[i];
        a.entries.emplace_back(name, std::move(t));
    }
    const auto expect = manifest.at("weights_fingerprint").get<std::string>();
    if (fingerprint_hex(a.weights_fingerprint()) != expect)
        throw ArchiveError(path + ": weight fingerprint mismatch");
    return a;
}

}  // namespace lw
