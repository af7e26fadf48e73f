#include <benchmark/benchmark.h>

#include "dsc/kernels.hpp"
#include "dsc/rng.hpp"

using namespace dsc;

namespace {

FeatureMap random_map(int c, int n, int h, int w) {
    FeatureMap m(c, n, h, w);
    Rng rng(1);
    for (auto& v : m.data) v = rng.uniform(-1.0, 1.0);
    return m;
}

std::vector<double> random_weights(std::size_t n) {
    std::vector<double> v(n);
    Rng rng(2);
    for (auto& x : v) x = rng.uniform(-0.1, 0.1);
    return v;
}

// Encoder's first layer at batch 32: 3 -> 16 channels, 32x32, stride 2.
const ConvShape kShape{3, 16, 3, 2, 1};

template <class Fwd>
void conv_forward(benchmark::State& state, Fwd fwd) {
    const auto in = random_map(3, int(state.range(0)), 32, 32);
    const auto w = random_weights(std::size_t(kShape.out_channels) * kShape.patch_size());
    const std::vector<double> b(kShape.out_channels, 0.0);
    for (auto _ : state) benchmark::DoNotOptimize(fwd(in, w, b, kShape));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <class Bwd>
void conv_backward(benchmark::State& state, Bwd bwd) {
    const auto in = random_map(3, int(state.range(0)), 32, 32);
    const auto w = random_weights(std::size_t(kShape.out_channels) * kShape.patch_size());
    const auto g = random_map(16, int(state.range(0)), 16, 16);
    for (auto _ : state) benchmark::DoNotOptimize(bwd(in, w, g, kShape));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ConvForwardParallel(benchmark::State& s) { conv_forward(s, kernels::conv2d_forward); }
void BM_ConvForwardReference(benchmark::State& s) { conv_forward(s, reference::conv2d_forward); }
void BM_ConvBackwardParallel(benchmark::State& s) { conv_backward(s, kernels::conv2d_backward); }
void BM_ConvBackwardReference(benchmark::State& s) { conv_backward(s, reference::conv2d_backward); }

void BM_UpsampleParallel(benchmark::State& state) {
    const auto in = random_map(32, 32, 8, 8);
    for (auto _ : state) benchmark::DoNotOptimize(kernels::upsample2x_forward(in));
}

void BM_UpsampleReference(benchmark::State& state) {
    const auto in = random_map(32, 32, 8, 8);
    for (auto _ : state) benchmark::DoNotOptimize(reference::upsample2x_forward(in));
}

}  // namespace

BENCHMARK(BM_ConvForwardParallel)->Arg(8)->Arg(32);
BENCHMARK(BM_ConvForwardReference)->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackwardParallel)->Arg(8)->Arg(32);
BENCHMARK(BM_ConvBackwardReference)->Arg(8)->Arg(32);
BENCHMARK(BM_UpsampleParallel);
BENCHMARK(BM_UpsampleReference);

BENCHMARK_MAIN();
