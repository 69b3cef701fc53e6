#include "lw/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numbers>

#include "lw/archive.hpp"

namespace lw {

std::vector<std::size_t> Dataset::split_indices(int split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest.split.size(); ++i) {
        if (manifest.split[i] == split) out.push_back(i);
    }
    return out;
}

std::vector<Tensor> Dataset::split_images(int split) const {
    std::vector<Tensor> out;
    for (std::size_t i : split_indices(split)) out.push_back(images[i]);
    return out;
}

Tensor synthetic_image(int h, int w, Rng& rng) {
    check_arg(h >= 8 && w >= 8, "synthetic_image: size too small");
    Tensor img({3, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    // Oriented two-colour gradient base.
    Real c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform();
        c1[c] = rng.uniform();
    }
    const Real theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Real dx = std::cos(theta), dy = std::sin(theta);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const Real g = 0.5 * (dx * (static_cast<Real>(j) / w) +
                                  dy * (static_cast<Real>(i) / h) + 1.0);
            for (int c = 0; c < 3; ++c)
                img.data[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(i) * w + j] =
                    c0[c] + (c1[c] - c0[c]) * g;
        }
    }

    // Sinusoidal texture overlay.
    const Real amp = rng.uniform(0.02, 0.15);
    const Real fx = rng.uniform(1.0, 6.0), fy = rng.uniform(1.0, 6.0);
    const Real phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    Real cw[3];
    for (int c = 0; c < 3; ++c) cw[c] = rng.uniform(0.3, 1.0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const Real t = amp * std::sin(2.0 * std::numbers::pi *
                                              (fx * j / static_cast<Real>(w) +
                                               fy * i / static_cast<Real>(h)) +
                                          phase);
            for (int c = 0; c < 3; ++c)
                img.data[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(i) * w + j] += cw[c] * t;
        }
    }

    // A few filled rectangles and disks.
    const int nshapes = 2 + static_cast<int>(rng.below(4));
    for (int s = 0; s < nshapes; ++s) {
        const bool disk = rng.bit() != 0;
        const Real ci = rng.uniform(0.1, 0.9) * h;
        const Real cj = rng.uniform(0.1, 0.9) * w;
        const Real radius = rng.uniform(0.06, 0.22) * std::min(h, w);
        Real color[3];
        for (int c = 0; c < 3; ++c) color[c] = rng.uniform();
        const Real alpha = rng.uniform(0.5, 1.0);
        const int i0 = std::max(0, static_cast<int>(ci - radius));
        const int i1 = std::min(h - 1, static_cast<int>(ci + radius));
        const int j0 = std::max(0, static_cast<int>(cj - radius));
        const int j1 = std::min(w - 1, static_cast<int>(cj + radius));
        for (int i = i0; i <= i1; ++i) {
            for (int j = j0; j <= j1; ++j) {
                if (disk) {
                    const Real di = i - ci, dj = j - cj;
                    if (di * di + dj * dj > radius * radius) continue;
                }
                for (int c = 0; c < 3; ++c) {
                    Real& p = img.data[static_cast<std::size_t>(c) * plane +
                                       static_cast<std::size_t>(i) * w + j];
                    p = (1.0 - alpha) * p + alpha * color[c];
                }
            }
        }
    }
    clamp01(img);
    return img;
}

namespace {

std::vector<int> assign_splits(std::size_t count, RngSeed seed) {
    // 80/10/10, deterministic per seed.
    std::vector<std::size_t> idx(count);
    for (std::size_t i = 0; i < count; ++i) idx[i] = i;
    Rng rng(seed_split(seed, "dataset-split"));
    for (std::size_t i = count; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    std::vector<int> split(count, kSplitTrain);
    const std::size_t val_n = count / 10;
    const std::size_t eval_n = count / 10;
    for (std::size_t i = 0; i < val_n && i < count; ++i) split[idx[i]] = kSplitVal;
    for (std::size_t i = val_n; i < val_n + eval_n && i < count; ++i) split[idx[i]] = kSplitEval;
    return split;
}

std::string dataset_checksum(const std::vector<Tensor>& images) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& img : images) {
        for (Real v : img.data) {
            const auto b = static_cast<unsigned char>(
                std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            h = fnv1a64(&b, 1, h);
        }
    }
    return fingerprint_hex(h);
}

}  // namespace

Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
    check_arg(spec.count >= 1, "synthetic dataset: count must be >= 1");
    Dataset ds;
    ds.manifest.source = "synthetic";
    ds.images.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
        Rng rng(seed_split(spec.seed, "synthetic-image-" + std::to_string(i)));
        ds.images.push_back(synthetic_image(spec.image_h, spec.image_w, rng));
        char id[32];
        std::snprintf(id, sizeof id, "syn-%06d", i);
        ds.manifest.ids.emplace_back(id);
    }
    ds.manifest.split = assign_splits(ds.images.size(), spec.seed);
    ds.manifest.checksum = dataset_checksum(ds.images);
    return ds;
}

Dataset load_folder_dataset(const std::string& dir, int image_h, int image_w, RngSeed split_seed) {
    namespace fs = std::filesystem;
    check_arg(fs::is_directory(dir), "load_folder_dataset: not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file()) names.push_back(e.path().string());
    }
    std::sort(names.begin(), names.end());

    Dataset ds;
    ds.manifest.source = dir;
    for (const auto& path : names) {
        Tensor img;
        try {
            img = load_image(path);
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
            continue;
        }
        // Crop to the target aspect ratio, then resize.
        const int H = img.dim(1), W = img.dim(2);
        const Real target_aspect = static_cast<Real>(image_w) / image_h;
        int ch = H, cw = W;
        if (static_cast<Real>(W) / H > target_aspect) {
            cw = std::max(1, static_cast<int>(std::lround(H * target_aspect)));
        } else {
            ch = std::max(1, static_cast<int>(std::lround(W / target_aspect)));
        }
        img = bilinear_resize(center_crop(img, ch, cw), image_h, image_w);
        clamp01(img);
        ds.images.push_back(std::move(img));
        ds.manifest.ids.push_back(fs::path(path).filename().string());
    }
    check_arg(!ds.images.empty(), "load_folder_dataset: no decodable images in " + dir);
    ds.manifest.split = assign_splits(ds.images.size(), split_seed);
    ds.manifest.checksum = dataset_checksum(ds.images);
    return ds;
}

}  // namespace lw
