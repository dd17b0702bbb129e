#include <benchmark/benchmark.h>

#include "nexus/layers.hpp"
#include "nexus/rng.hpp"

using namespace nexus;

namespace {

void ConvForward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    ConvLayer conv(64, 64, 7);
    conv.init_he(rng);
    Tensor in({batch, 64, 21, 21});
    in.gaussian_fill(rng, 1.0);
    for (auto _ : state) {
        Tensor out = conv.forward({&in}, Mode::train, nullptr);
        benchmark::DoNotOptimize(out.data());
    }
    // multiply+add per kernel tap
    const double flops = 2.0 * batch * 64.0 * 15 * 15 * 64 * 49;
    state.counters["GFLOP/s"] =
        benchmark::Counter(flops * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}
BENCHMARK(ConvForward)->Arg(1)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void ConvBackward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    ConvLayer conv(64, 64, 7);
    conv.init_he(rng);
    Tensor in({batch, 64, 21, 21});
    in.gaussian_fill(rng, 1.0);
    Tensor grad({batch, 64, 15, 15}, 1.0);
    conv.forward({&in}, Mode::train, nullptr);
    for (auto _ : state) {
        auto gs = conv.backward(grad);
        benchmark::DoNotOptimize(gs[0].data());
    }
    const double flops = 2.0 * 2.0 * batch * 64.0 * 15 * 15 * 64 * 49;
    state.counters["GFLOP/s"] =
        benchmark::Counter(flops * state.iterations() / 1e9, benchmark::Counter::kIsRate);
}
BENCHMARK(ConvBackward)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BatchNormForward(benchmark::State& state) {
    Rng rng(1);
    BatchNormLayer bn(64);
    Tensor in({128, 64, 15, 15});
    in.gaussian_fill(rng, 1.0);
    for (auto _ : state) {
        Tensor out = bn.forward({&in}, Mode::train, nullptr);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BatchNormForward)->Unit(benchmark::kMillisecond);

void MaxPoolForward(benchmark::State& state) {
    Rng rng(1);
    PoolLayer pool(11, 1);
    Tensor in({128, 64, 25, 25});
    in.gaussian_fill(rng, 1.0);
    for (auto _ : state) {
        Tensor out = pool.forward({&in}, Mode::train, nullptr);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(MaxPoolForward)->Unit(benchmark::kMillisecond);

} // namespace
