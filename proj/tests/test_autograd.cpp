#include "lw/autograd.hpp"

#include <stdexcept>

#include "framework.hpp"
#include "gradcheck.hpp"

using namespace lw;
using gradcheck::max_rel_err;
using gradcheck::random_tensor;

namespace {
constexpr double kTol = 1e-3;
}

TEST_CASE(forward_conv2d_hand_example) {
    auto x = ag::constant(Tensor({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    auto w = ag::constant(Tensor({1, 1, 2, 2}, {1, 0, 0, 1}));
    auto b = ag::constant(Tensor({1}, {0.5}));
    auto y = ag::conv2d(x, w, b, 1, 0);
    REQUIRE(y->val.shape == std::vector<int>({1, 1, 2, 2}));
    REQUIRE(y->val.data == std::vector<Real>({6.5, 8.5, 12.5, 14.5}));
}

TEST_CASE(forward_conv_transpose_shape) {
    Rng rng(RngSeed{1});
    auto x = ag::constant(random_tensor({1, 2, 4, 4}, rng));
    auto w = ag::constant(random_tensor({2, 3, 4, 4}, rng));
    auto b = ag::constant(Tensor({3}));
    auto y = ag::conv_transpose2d(x, w, b, 2, 1);
    REQUIRE(y->val.shape == std::vector<int>({1, 3, 8, 8}));
}

TEST_CASE(conv_then_transpose_round_trip_shapes) {
    Rng rng(RngSeed{2});
    auto x = ag::constant(random_tensor({2, 3, 16, 16}, rng));
    auto wd = ag::constant(random_tensor({5, 3, 4, 4}, rng));
    auto wu = ag::constant(random_tensor({5, 3, 4, 4}, rng));
    auto b5 = ag::constant(Tensor({5}));
    auto b3 = ag::constant(Tensor({3}));
    auto down = ag::conv2d(x, wd, b5, 2, 1);
    REQUIRE(down->val.shape == std::vector<int>({2, 5, 8, 8}));
    auto up = ag::conv_transpose2d(down, wu, b3, 2, 1);
    REQUIRE(up->val.shape == std::vector<int>({2, 3, 16, 16}));
}

TEST_CASE(forward_group_norm_normalizes) {
    Rng rng(RngSeed{3});
    auto x = ag::constant(random_tensor({2, 4, 5, 5}, rng, -3.0, 5.0));
    auto gamma = ag::constant(Tensor({4}, 1.0));
    auto beta = ag::constant(Tensor({4}));
    auto y = ag::group_norm(x, gamma, beta, 2);
    const int cg = 2, plane = 25;
    for (int n = 0; n < 2; ++n) {
        for (int g = 0; g < 2; ++g) {
            double mean = 0.0, var = 0.0;
            for (int c = 0; c < cg; ++c)
                for (int i = 0; i < plane; ++i)
                    mean += y->val.at4(n, g * cg + c, i / 5, i % 5);
            mean /= cg * plane;
            for (int c = 0; c < cg; ++c)
                for (int i = 0; i < plane; ++i) {
                    const double d = y->val.at4(n, g * cg + c, i / 5, i % 5) - mean;
                    var += d * d;
                }
            var /= cg * plane;
            REQUIRE_CLOSE(mean, 0.0, 1e-10);
            REQUIRE_CLOSE(var, 1.0, 1e-3);
        }
    }
}

TEST_CASE(forward_avg_pool_exact) {
    auto x = ag::constant(Tensor({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}));
    auto y = ag::avg_pool2d(x);
    REQUIRE(y->val.shape == std::vector<int>({1, 1, 1, 2}));
    REQUIRE(y->val.data == std::vector<Real>({3.5, 5.5}));
}

TEST_CASE(forward_activations_at_zero) {
    auto x = ag::constant(Tensor({3}));
    REQUIRE(ag::tanh_(x)->val.data[0] == 0.0);
    REQUIRE(ag::sigmoid_(x)->val.data[0] == 0.5);
    REQUIRE(ag::silu_(x)->val.data[0] == 0.0);
}

TEST_CASE(forward_sep_filter_identity_kernel) {
    Rng rng(RngSeed{4});
    const Tensor t = random_tensor({1, 2, 5, 5}, rng);
    auto y = ag::sep_filter2d_valid(ag::constant(t), {1.0});
    REQUIRE(y->val.data == t.data);
}

TEST_CASE(forward_sep_filter_box_kernel) {
    auto x = ag::constant(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
    auto y = ag::sep_filter2d_valid(x, {0.5, 0.5});
    REQUIRE(y->val.shape == std::vector<int>({1, 1, 1, 1}));
    REQUIRE_CLOSE(y->val.data[0], 2.5, 1e-12);
}

TEST_CASE(backward_shared_node_accumulates) {
    auto x = ag::leaf(Tensor({1}, {3.0}), true);
    auto y = ag::sum_all(ag::add(x, x));
    ag::backward(y);
    REQUIRE(x->grad.data[0] == 2.0);
}

TEST_CASE(backward_requires_scalar_root) {
    auto x = ag::leaf(Tensor({2}, {1.0, 2.0}), true);
    REQUIRE_THROWS_AS(ag::backward(ag::scale(x, 2.0)), std::invalid_argument);
}

TEST_CASE(grad_elementwise_binary) {
    Rng rng(RngSeed{10});
    const Tensor a = random_tensor({2, 3}, rng);
    const Tensor b = random_tensor({2, 3}, rng, 0.5, 2.0);
    auto check = [&](const char* what, auto op) {
        const double err = max_rel_err(
            [&](const std::vector<ag::Var>& v) { return ag::mean_all(op(v[0], v[1])); }, {a, b});
        if (err > kTol) TESTFW_FAIL(what << " grad err " << err);
    };
    check("add", [](auto& x, auto& y) { return ag::add(x, y); });
    check("sub", [](auto& x, auto& y) { return ag::sub(x, y); });
    check("mul", [](auto& x, auto& y) { return ag::mul(x, y); });
    check("div", [](auto& x, auto& y) { return ag::div(x, y); });
}

TEST_CASE(grad_elementwise_unary) {
    Rng rng(RngSeed{11});
    const Tensor x = random_tensor({2, 4}, rng);
    const Tensor xpos = random_tensor({2, 4}, rng, 0.2, 3.0);
    const Tensor c = random_tensor({2, 4}, rng);
    auto check = [&](const char* what, const Tensor& in, auto op) {
        const double err = max_rel_err(
            [&](const std::vector<ag::Var>& v) { return ag::mean_all(op(v[0])); }, {in});
        if (err > kTol) TESTFW_FAIL(what << " grad err " << err);
    };
    check("neg", x, [](auto& v) { return ag::neg(v); });
    check("scale", x, [](auto& v) { return ag::scale(v, -1.7); });
    check("add_scalar", x, [](auto& v) { return ag::add_scalar(v, 0.3); });
    check("square", x, [](auto& v) { return ag::square(v); });
    check("exp", x, [](auto& v) { return ag::exp_(v); });
    check("log", xpos, [](auto& v) { return ag::log_(v); });
    check("tanh", x, [](auto& v) { return ag::tanh_(v); });
    check("sigmoid", x, [](auto& v) { return ag::sigmoid_(v); });
    check("silu", x, [](auto& v) { return ag::silu_(v); });
    check("sub_const", x, [&](auto& v) { return ag::square(ag::sub_const(v, c)); });
}

TEST_CASE(grad_shape_ops) {
    Rng rng(RngSeed{12});
    const Tensor a = random_tensor({2, 1, 3, 3}, rng);
    const Tensor b = random_tensor({2, 2, 3, 3}, rng);
    const double err = max_rel_err(
        [](const std::vector<ag::Var>& v) {
            auto cat = ag::concat_channels({v[0], v[1]});
            auto sl = ag::slice_channels(cat, 1, 3);
            return ag::mean_all(ag::square(ag::reshape(sl, {2, 18})));
        },
        {a, b});
    REQUIRE(err <= kTol);
}

TEST_CASE(grad_matmul_and_linear) {
    Rng rng(RngSeed{13});
    const double e1 = max_rel_err(
        [](const std::vector<ag::Var>& v) { return ag::mean_all(ag::matmul(v[0], v[1])); },
        {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
    REQUIRE(e1 <= kTol);
    const double e2 = max_rel_err(
        [](const std::vector<ag::Var>& v) {
            return ag::mean_all(ag::square(ag::linear(v[0], v[1], v[2])));
        },
        {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)});
    REQUIRE(e2 <= kTol);
}

TEST_CASE(grad_conv2d) {
    Rng rng(RngSeed{14});
    const double e1 = max_rel_err(
        [](const std::vector<ag::Var>& v) {
            return ag::mean_all(ag::square(ag::conv2d(v[0], v[1], v[2], 1, 1)));
        },
        {random_tensor({2, 3, 5, 5}, rng), random_tensor({4, 3, 3, 3}, rng),
         random_tensor({4}, rng)});
    REQUIRE(e1 <= kTol);
    const double e2 = max_rel_err(
        [](const std::vector<ag::Var>& v) {
            return ag::mean_all(ag::square(ag::conv2d(v[0], v[1], v[2], 2, 1)));
        },
        {random_tensor({1, 2, 6, 6}, rng), random_tensor({3, 2, 4, 4}, rng),
         random_tensor({3}, rng)});
    REQUIRE(e2 <= kTol);
}

TEST_CASE(grad_conv_transpose2d) {
    Rng rng(RngSeed{15});
    const double err = max_rel_err(
        [](const std::vector<ag::Var>& v) {
            return ag::mean_all(ag::square(ag::conv_transpose2d(v[0], v[1], v[2], 2, 1)));
        },
        {random_tensor({2, 3, 3, 3}, rng), random_tensor({3, 2, 4, 4}, rng),
         random_tensor({2}, rng)});
    REQUIRE(err <= kTol);
}

TEST_CASE(grad_group_norm) {
    Rng rng(RngSeed{16});
    const double err = max_rel_err(
        [](const std::vector<ag::Var>& v) {
            return ag::mean_all(ag::square(ag::group_norm(v[0], v[1], v[2], 2)));
        },
        {random_tensor({2, 4, 3, 3}, rng), random_tensor({4}, rng, 0.5, 1.5),
         random_tensor({4}, rng)});
    REQUIRE(err <= kTol);
}

TEST_CASE(grad_avg_pool_and_filter) {
    Rng rng(RngSeed{17});
    const double e1 = max_rel_err(
        [](const std::vector<ag::Var>& v) {
            return ag::mean_all(ag::square(ag::avg_pool2d(v[0])));
        },
        {random_tensor({1, 2, 4, 4}, rng)});
    REQUIRE(e1 <= kTol);
    const std::vector<Real> k = {0.25, 0.5, 0.25};
    const double e2 = max_rel_err(
        [&](const std::vector<ag::Var>& v) {
            return ag::mean_all(ag::square(ag::sep_filter2d_valid(v[0], k)));
        },
        {random_tensor({1, 2, 6, 6}, rng)});
    REQUIRE(e2 <= kTol);
}

TEST_CASE(grad_log_sum_exp_rows) {
    Rng rng(RngSeed{18});
    const double err = max_rel_err(
        [](const std::vector<ag::Var>& v) {
            return ag::mean_all(ag::log_(ag::row_sum(ag::exp_(ag::square(v[0])))));
        },
        {random_tensor({3, 5}, rng)});
    REQUIRE(err <= kTol);
}

TEST_CASE(grad_deep_composite) {
    Rng rng(RngSeed{19});
    const Tensor target = random_tensor({2, 3}, rng);
    const double err = max_rel_err(
        [&](const std::vector<ag::Var>& v) {
            auto h = ag::conv2d(v[0], v[1], v[2], 1, 1);
            h = ag::group_norm(h, v[3], v[4], 2);
            h = ag::silu_(h);
            h = ag::avg_pool2d(h);
            h = ag::reshape(h, {2, 16});
            h = ag::tanh_(ag::linear(h, v[5], v[6]));
            return ag::mse_loss(h, ag::constant(target));
        },
        {random_tensor({2, 2, 4, 4}, rng), random_tensor({4, 2, 3, 3}, rng),
         random_tensor({4}, rng), random_tensor({4}, rng, 0.5, 1.5), random_tensor({4}, rng),
         random_tensor({3, 16}, rng), random_tensor({3}, rng)});
    REQUIRE(err <= kTol);
}

TEST_MAIN()
