#include "lw/nn.hpp"

#include <cmath>

namespace lw::nn {

std::size_t param_count(const ParamList& params) {
    std::size_t n = 0;
    for (const auto& p : params) n += p.var->val.numel();
    return n;
}

void set_trainable(ParamList& params, bool trainable) {
    for (auto& p : params) p.var->requires_grad = trainable;
}

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
    check_arg(fan_in > 0, "uniform_init: fan_in must be positive");
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(fan_in));
    Tensor t(std::move(shape));
    for (Real& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

Linear::Linear(int in, int out, Rng& rng)
    : w(ag::leaf(uniform_init({out, in}, in, rng), true)),
      b(ag::leaf(Tensor({out}), true)) {}

void Linear::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

Conv2d::Conv2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng)
    : w(ag::leaf(uniform_init({cout, cin, k, k}, cin * k * k, rng), true)),
      b(ag::leaf(Tensor({cout}), true)),
      stride(stride_),
      pad(pad_) {}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

ConvTranspose2d::ConvTranspose2d(int cin, int cout, int k, int stride_, int pad_, Rng& rng)
    : w(ag::leaf(uniform_init({cin, cout, k, k}, cin * k * k, rng), true)),
      b(ag::leaf(Tensor({cout}), true)),
      stride(stride_),
      pad(pad_) {}

void ConvTranspose2d::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
}

GroupNorm::GroupNorm(int channels, int groups_)
    : gamma(ag::leaf(Tensor({channels}, 1.0), true)),
      beta(ag::leaf(Tensor({channels}), true)),
      groups(groups_) {}

void GroupNorm::collect(const std::string& prefix, ParamList& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

AdamW::AdamW(ParamList params, Real lr, Real beta1, Real beta2, Real eps, Real weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
    slots_.reserve(params.size());
    for (auto& p : params)
        slots_.push_back({p.var, Tensor(p.var->val.shape), Tensor(p.var->val.shape)});
}

void AdamW::step() {
    ++t_;
    const Real bc1 = 1.0 - std::pow(beta1_, static_cast<Real>(t_));
    const Real bc2 = 1.0 - std::pow(beta2_, static_cast<Real>(t_));
    for (auto& s : slots_) {
        if (!s.var->requires_grad || !s.var->grad_alloc) continue;
        auto& val = s.var->val.data;
        auto& grad = s.var->grad.data;
        for (std::size_t i = 0; i < val.size(); ++i) {
            if (weight_decay_ != 0.0) val[i] -= lr_ * weight_decay_ * val[i];
            const Real g = grad[i];
            s.m.data[i] = beta1_ * s.m.data[i] + (1.0 - beta1_) * g;
            s.v.data[i] = beta2_ * s.v.data[i] + (1.0 - beta2_) * g * g;
            const Real mhat = s.m.data[i] / bc1;
            const Real vhat = s.v.data[i] / bc2;
            val[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& s : slots_) {
        if (s.var->grad_alloc) s.var->grad.fill(0.0);
    }
}

}  // namespace lw::nn
