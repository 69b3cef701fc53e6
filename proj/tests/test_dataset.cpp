#include "lw/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "framework.hpp"

using namespace lw;

TEST_CASE(synthetic_dataset_shapes_and_splits) {
    SyntheticSpec spec;
    spec.count = 40;
    spec.image_h = 32;
    spec.image_w = 32;
    const Dataset ds = make_synthetic_dataset(spec);
    REQUIRE(static_cast<int>(ds.images.size()) == 40);
    REQUIRE(ds.manifest.ids.size() == 40);
    REQUIRE(ds.manifest.split.size() == 40);
    REQUIRE(ds.manifest.source == "synthetic");
    for (const auto& img : ds.images) {
        REQUIRE(img.shape == std::vector<int>({3, 32, 32}));
        for (Real v : img.data) REQUIRE(v >= 0.0 && v <= 1.0);
    }
    const auto train = ds.split_indices(kSplitTrain);
    const auto val = ds.split_indices(kSplitVal);
    const auto eval = ds.split_indices(kSplitEval);
    REQUIRE(train.size() + val.size() + eval.size() == 40);
    REQUIRE(train.size() == 32);
    REQUIRE(val.size() == 4);
    REQUIRE(eval.size() == 4);
}

TEST_CASE(synthetic_dataset_is_deterministic) {
    SyntheticSpec spec;
    spec.count = 8;
    spec.image_h = 16;
    spec.image_w = 16;
    const Dataset a = make_synthetic_dataset(spec);
    const Dataset b = make_synthetic_dataset(spec);
    REQUIRE(a.manifest.checksum == b.manifest.checksum);
    for (std::size_t i = 0; i < a.images.size(); ++i) REQUIRE(a.images[i].data == b.images[i].data);

    spec.seed = RngSeed{99};
    const Dataset c = make_synthetic_dataset(spec);
    REQUIRE(c.manifest.checksum != a.manifest.checksum);
}

TEST_CASE(synthetic_images_vary_across_indices) {
    SyntheticSpec spec;
    spec.count = 4;
    spec.image_h = 16;
    spec.image_w = 16;
    const Dataset ds = make_synthetic_dataset(spec);
    REQUIRE(ds.images[0].data != ds.images[1].data);
    REQUIRE(ds.images[1].data != ds.images[2].data);
}

TEST_CASE(folder_dataset_loads_and_skips_bad_files) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "lw_test_folder_ds";
    fs::create_directories(dir);

    SyntheticSpec spec;
    spec.count = 3;
    spec.image_h = 20;
    spec.image_w = 28;
    const Dataset src = make_synthetic_dataset(spec);
    save_png(src.images[0], (dir / "a.png").string());
    save_png(src.images[1], (dir / "b.png").string());
    save_png(src.images[2], (dir / "c.png").string());
    std::ofstream(dir / "junk.png") << "not a png";

    const Dataset ds = load_folder_dataset(dir.string(), 16, 16, RngSeed{5});
    REQUIRE(ds.images.size() == 3);
    REQUIRE(ds.manifest.ids == std::vector<std::string>({"a.png", "b.png", "c.png"}));
    for (const auto& img : ds.images) REQUIRE(img.shape == std::vector<int>({3, 16, 16}));

    fs::remove_all(dir);
}

TEST_CASE(folder_dataset_rejects_empty_dir) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "lw_test_empty_ds";
    fs::create_directories(dir);
    REQUIRE_THROWS_AS(load_folder_dataset(dir.string(), 16, 16, RngSeed{5}), std::invalid_argument);
    fs::remove_all(dir);
}

TEST_MAIN()
