#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lw/tensor.hpp"

namespace lw::ag {

struct Node;
using Var = std::shared_ptr<Node>;

// One tape entry. `val` is the forward value; `grad` is allocated on demand
// during backward. `back` scatters this node's grad into its parents.
struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::vector<Var> parents;
    std::function<void(Node&)> back;

    void ensure_grad();
    void accumulate(const Tensor& g);
};

Var leaf(Tensor v, bool requires_grad = false);
Var constant(Tensor v);

// Runs reverse-mode accumulation from a scalar root (numel == 1).
void backward(const Var& root);

// --- elementwise ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& x);
Var scale(const Var& x, Real c);
Var add_scalar(const Var& x, Real c);
Var sub_const(const Var& x, const Tensor& c);
Var square(const Var& x);
Var exp_(const Var& x);
Var log_(const Var& x);
Var tanh_(const Var& x);
Var sigmoid_(const Var& x);
Var silu_(const Var& x);

// --- shape ---
Var reshape(const Var& x, std::vector<int> shape);
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& x, int c0, int c1);

// --- linear algebra ---
Var matmul(const Var& a, const Var& b);
Var linear(const Var& x, const Var& w, const Var& b);

// --- conv / norm / pooling ---
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, Real eps = 1e-5);
Var avg_pool2d(const Var& x);
// Depthwise valid-region correlation with the separable kernel k ⊗ k.
// Gradients flow to x only; the kernel is a fixed constant.
Var sep_filter2d_valid(const Var& x, const std::vector<Real>& kernel);

// --- reductions ---
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var row_sum(const Var& x);  // {N,F} -> {N,1}

// --- composites ---
Var mse_loss(const Var& a, const Var& b);

}  // namespace lw::ag
