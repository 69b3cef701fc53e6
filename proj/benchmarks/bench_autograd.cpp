#include <benchmark/benchmark.h>

#include "lw/autograd.hpp"
#include "lw/rng.hpp"

namespace {

lw::Tensor randt(std::vector<int> shape, lw::Rng& rng) {
    lw::Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

void BM_Conv2dForward(benchmark::State& state) {
    using namespace lw;
    Rng rng(RngSeed{1});
    auto x = ag::constant(randt({2, 32, 16, 16}, rng));
    auto w = ag::constant(randt({32, 32, 3, 3}, rng));
    auto b = ag::constant(Tensor({32}));
    for (auto _ : state) {
        auto y = ag::conv2d(x, w, b, 1, 1);
        benchmark::DoNotOptimize(y->val.data.data());
    }
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv2dTrainStep(benchmark::State& state) {
    using namespace lw;
    Rng rng(RngSeed{2});
    auto x = ag::constant(randt({2, 32, 16, 16}, rng));
    auto w = ag::leaf(randt({32, 32, 3, 3}, rng), true);
    auto b = ag::leaf(Tensor({32}), true);
    for (auto _ : state) {
        auto loss = ag::mean_all(ag::square(ag::conv2d(x, w, b, 1, 1)));
        ag::backward(loss);
        benchmark::DoNotOptimize(w->grad.data.data());
        w->grad.fill(0.0);
        b->grad.fill(0.0);
    }
}
BENCHMARK(BM_Conv2dTrainStep);

}  // namespace

BENCHMARK_MAIN();
