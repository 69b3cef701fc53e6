#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lw/autograd.hpp"
#include "lw/rng.hpp"

namespace lw::nn {

struct Parameter {
    std::string name;
    ag::Var var;
};

using ParamList = std::vector<Parameter>;

std::size_t param_count(const ParamList& params);
void set_trainable(ParamList& params, bool trainable);

// Weights start from U(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases start at zero.
Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng);

struct Linear {
    ag::Var w, b;

    Linear() = default;
    Linear(int in, int out, Rng& rng);
    ag::Var operator()(const ag::Var& x) const { return ag::linear(x, w, b); }
    void collect(const std::string& prefix, ParamList& out) const;
};

struct Conv2d {
    ag::Var w, b;
    int stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride, int pad, Rng& rng);
    ag::Var operator()(const ag::Var& x) const { return ag::conv2d(x, w, b, stride, pad); }
    void collect(const std::string& prefix, ParamList& out) const;
};

struct ConvTranspose2d {
    ag::Var w, b;
    int stride = 1, pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int cin, int cout, int k, int stride, int pad, Rng& rng);
    ag::Var operator()(const ag::Var& x) const {
        return ag::conv_transpose2d(x, w, b, stride, pad);
    }
    void collect(const std::string& prefix, ParamList& out) const;
};

struct GroupNorm {
    ag::Var gamma, beta;
    int groups = 1;

    GroupNorm() = default;
    GroupNorm(int channels, int groups);
    ag::Var operator()(const ag::Var& x) const {
        return ag::group_norm(x, gamma, beta, groups);
    }
    void collect(const std::string& prefix, ParamList& out) const;
};

// Adam with decoupled weight decay; decay defaults to zero so plain Adam is
// the out-of-the-box behaviour.
class AdamW {
public:
    AdamW(ParamList params, Real lr, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8,
          Real weight_decay = 0.0);
    void step();
    void zero_grad();
    void set_lr(Real lr) { lr_ = lr; }
    Real lr() const { return lr_; }

private:
    struct Slot {
        ag::Var var;
        Tensor m, v;
    };
    std::vector<Slot> slots_;
    Real lr_, beta1_, beta2_, eps_, weight_decay_;
    std::int64_t t_ = 0;
};

}  // namespace lw::nn
