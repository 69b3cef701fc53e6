#include "lw/tensor.hpp"

#include <stdexcept>

#include "framework.hpp"

using namespace lw;

TEST_CASE(shape_and_numel) {
    Tensor t({2, 4, 8, 8});
    REQUIRE(t.numel() == 512);
    REQUIRE(t.ndim() == 4);
    REQUIRE(t.dim(1) == 4);
    for (Real v : t.data) REQUIRE(v == 0.0);
}

TEST_CASE(fill_value_constructor) {
    Tensor t({3, 2}, 1.5);
    for (Real v : t.data) REQUIRE(v == 1.5);
}

TEST_CASE(data_constructor_validates_size) {
    REQUIRE_THROWS_AS(Tensor({2, 2}, std::vector<Real>{1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE(nchw_addressing_is_row_major) {
    Tensor t({2, 3, 4, 5});
    t.at4(1, 2, 3, 4) = 9.0;
    REQUIRE(t.data[((1 * 3 + 2) * 4 + 3) * 5 + 4] == 9.0);
}

TEST_CASE(all_finite_detects_nan_and_inf) {
    Tensor t({4});
    REQUIRE(t.all_finite());
    t.data[2] = std::numeric_limits<Real>::infinity();
    REQUIRE(!t.all_finite());
    t.data[2] = std::nan("");
    REQUIRE(!t.all_finite());
}

TEST_CASE(shape_mismatch_reported) {
    Tensor a({2, 2}), b({4});
    REQUIRE_THROWS_AS(check_same_shape(a, b, "test"), std::invalid_argument);
}

TEST_MAIN()
