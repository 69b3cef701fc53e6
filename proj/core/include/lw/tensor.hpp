#pragma once

#include <initializer_list>
#include <string>
#include <vector>

#include "lw/common.hpp"

namespace lw {

// Dense row-major tensor. Shapes in this project are {N,C,H,W} for image-like
// data and {N,F} for flat features; the type itself is agnostic.
struct Tensor {
    std::vector<int> shape;
    std::vector<Real> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
    Tensor(std::vector<int> s, Real fill) : shape(std::move(s)), data(numel_of(shape), fill) {}
    Tensor(std::vector<int> s, std::vector<Real> d);

    static std::size_t numel_of(const std::vector<int>& s);
    std::size_t numel() const { return data.size(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }
    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    Real& at(std::size_t i) { return data[i]; }
    Real at(std::size_t i) const { return data[i]; }

    // {N,C,H,W} addressing, bounds unchecked.
    Real& at4(int n, int c, int h, int w) {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    Real at4(int n, int c, int h, int w) const {
        return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    void fill(Real v) { std::fill(data.begin(), data.end(), v); }
    bool all_finite() const;
    std::string shape_str() const;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* who);

// Stack same-shaped tensors along a new leading batch axis, and split back.
Tensor stack(const std::vector<Tensor>& items);
std::vector<Tensor> unstack(const Tensor& batch);

}  // namespace lw
