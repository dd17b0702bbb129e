#include <benchmark/benchmark.h>

#include "nexus/model.hpp"
#include "nexus/morphology.hpp"
#include "nexus/patches.hpp"
#include "nexus/phantom.hpp"
#include "nexus/rng.hpp"

using namespace nexus;

namespace {

void ModelForwardInfer(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    NexusModel model = build_model(Arch::LN, ModelConfig{}, rng);
    Tensor big({batch, 4, 33, 33});
    Tensor small({batch, 4, 15, 15});
    big.gaussian_fill(rng, 1.0);
    small.gaussian_fill(rng, 1.0);
    for (auto _ : state) {
        Tensor out = model.forward_batch(big, small, Mode::infer);
        benchmark::DoNotOptimize(out.data());
    }
    state.counters["patches/s"] = benchmark::Counter(
        static_cast<double>(batch * state.iterations()), benchmark::Counter::kIsRate);
}
BENCHMARK(ModelForwardInfer)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void ModelTrainStep(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    NexusModel model = build_model(Arch::LN, ModelConfig{}, rng);
    Rng drop(2);
    Tensor big({batch, 4, 33, 33});
    Tensor small({batch, 4, 15, 15});
    big.gaussian_fill(rng, 1.0);
    small.gaussian_fill(rng, 1.0);
    for (auto _ : state) {
        Tensor probs = model.forward_batch(big, small, Mode::train, &drop);
        Tensor grad(probs.shape(), 1e-3);
        model.backward(grad);
        benchmark::DoNotOptimize(probs.data());
    }
    state.counters["patches/s"] = benchmark::Counter(
        static_cast<double>(batch * state.iterations()), benchmark::Counter::kIsRate);
}
BENCHMARK(ModelTrainStep)->Arg(128)->Unit(benchmark::kMillisecond);

void PhantomGeneration(benchmark::State& state) {
    for (auto _ : state) {
        VolumeSet vol = generate_phantom(7, 48, 64, 64, TumorSpec{});
        benchmark::DoNotOptimize(vol.modalities[0].data());
    }
}
BENCHMARK(PhantomGeneration)->Unit(benchmark::kMillisecond);

void PatchSampling(benchmark::State& state) {
    std::vector<VolumeSet> vols;
    vols.push_back(generate_phantom(7, 48, 64, 64, TumorSpec{}));
    for (auto _ : state) {
        auto patches = sample_patches(vols, {SamplerMode::balanced, 500, 3});
        benchmark::DoNotOptimize(patches.data());
    }
}
BENCHMARK(PatchSampling)->Unit(benchmark::kMillisecond);

void MorphCleanup(benchmark::State& state) {
    Rng rng(5);
    LabelMap map(48, 64, 64);
    for (auto& v : map.labels) v = rng.below(12) == 0 ? static_cast<std::uint8_t>(rng.below(5)) : 0;
    for (auto _ : state) {
        LabelMap cleaned = morph_cleanup(map);
        benchmark::DoNotOptimize(cleaned.labels.data());
    }
}
BENCHMARK(MorphCleanup)->Unit(benchmark::kMillisecond);

} // namespace
