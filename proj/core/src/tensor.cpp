#include "lw/tensor.hpp"

#include <cmath>
#include <sstream>

namespace lw {

Tensor::Tensor(std::vector<int> s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
    check_arg(data.size() == numel_of(shape), "tensor data size does not match shape");
}

std::size_t Tensor::numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
        check_arg(d >= 0, "tensor dimensions must be non-negative");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

bool Tensor::all_finite() const {
    for (Real v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '{';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << '}';
    return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    check_arg(a.shape == b.shape,
              std::string(who) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

Tensor stack(const std::vector<Tensor>& items) {
    check_arg(!items.empty(), "stack: empty list");
    std::vector<int> shape{static_cast<int>(items.size())};
    shape.insert(shape.end(), items[0].shape.begin(), items[0].shape.end());
    Tensor out(std::move(shape));
    const std::size_t stride = items[0].numel();
    for (std::size_t i = 0; i < items.size(); ++i) {
        check_same_shape(items[0], items[i], "stack");
        std::copy(items[i].data.begin(), items[i].data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
}

std::vector<Tensor> unstack(const Tensor& batch) {
    check_arg(batch.ndim() >= 2, "unstack: need a batch axis");
    const int n = batch.dim(0);
    const std::vector<int> shape(batch.shape.begin() + 1, batch.shape.end());
    const std::size_t stride = Tensor::numel_of(shape);
    std::vector<Tensor> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Tensor t(shape);
        std::copy_n(batch.data.begin() + static_cast<std::ptrdiff_t>(i * stride), stride,
                    t.data.begin());
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace lw
