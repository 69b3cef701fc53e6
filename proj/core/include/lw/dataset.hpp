#pragma once

#include <string>
#include <vector>

#include "lw/image.hpp"
#include "lw/rng.hpp"

namespace lw {

inline constexpr int kSplitTrain = 0;
inline constexpr int kSplitVal = 1;
inline constexpr int kSplitEval = 2;

struct SyntheticSpec {
    int count = 2000;
    int image_h = 64, image_w = 64;
    RngSeed seed{7};
};

struct DatasetManifest {
    std::string source;  // "synthetic" or the folder path
    std::vector<std::string> ids;
    std::vector<int> split;  // kSplitTrain / kSplitVal / kSplitEval per image
    std::string checksum;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<Tensor> images;

    std::vector<std::size_t> split_indices(int split) const;
    std::vector<Tensor> split_images(int split) const;
};

// Structured image: oriented colour gradient + sinusoidal texture + a few
// filled shapes. Deterministic in the rng state.
Tensor synthetic_image(int h, int w, Rng& rng);

Dataset make_synthetic_dataset(const SyntheticSpec& spec);

// Loads every decodable PNG/JPEG under dir (sorted by name), center-crops to
// the target aspect and resizes. Unreadable files are skipped with a warning
// on stderr; an empty result is an error.
Dataset load_folder_dataset(const std::string& dir, int image_h, int image_w, RngSeed split_seed);

}  // namespace lw
