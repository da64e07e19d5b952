#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "thz/fft.hpp"
#include "thz/optics.hpp"
#include "thz/pcnn.hpp"
#include "thz/phantom.hpp"
#include "thz/signal.hpp"

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

void BM_FFT(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto re = noise(n, 1);
    std::vector<thz::fft::Complex> data(n);
    for (auto _ : state) {
        for (std::size_t i = 0; i < n; ++i) data[i] = re[i];
        thz::fft::transform(data, thz::fft::Direction::forward);
        benchmark::DoNotOptimize(data.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()));
}
BENCHMARK(BM_FFT)->Arg(1024)->Arg(3072)->Arg(4096);

void BM_ExtractConstants(benchmark::State& state) {
    const auto ref = thz::forward_transform(thz::make_reference(thz::PhantomSpec{}));
    const thz::SampleGeometry geom{0.5};
    const auto sample = thz::apply_forward_model(ref, thz::MaterialModel::constant(1.5, 10.0), geom);
    for (auto _ : state) benchmark::DoNotOptimize(thz::extract_constants(sample, ref, geom));
}
BENCHMARK(BM_ExtractConstants);

void BM_PixelExtraction(benchmark::State& state) {
    const auto ref_trace = thz::make_reference(thz::PhantomSpec{});
    const auto ref = thz::forward_transform(ref_trace);
    const thz::SampleGeometry geom{0.5};
    const auto sample = thz::inverse_transform(
        thz::apply_forward_model(ref, thz::MaterialModel::constant(1.5, 10.0), geom), ref_trace.size());
    for (auto _ : state)
        benchmark::DoNotOptimize(thz::extract_constants(thz::forward_transform(sample), ref, geom));
}
BENCHMARK(BM_PixelExtraction);

void BM_PcnnForward(benchmark::State& state) {
    const thz::pcnn::Network net(thz::pcnn::Architecture::standard());
    const auto params = noise(net.layout().total, 2);
    const auto x = noise(3072, 3);
    thz::pcnn::Network::Cache cache;
    for (auto _ : state) {
        net.forward(params, x, cache);
        benchmark::DoNotOptimize(cache.output.data());
    }
}
BENCHMARK(BM_PcnnForward);

void BM_PcnnForwardBackward(benchmark::State& state) {
    const thz::pcnn::Network net(thz::pcnn::Architecture::standard());
    const auto params = noise(net.layout().total, 2);
    const auto x = noise(3072, 3);
    const auto g = noise(3072, 4);
    std::vector<double> grad(params.size());
    thz::pcnn::Network::Cache cache;
    for (auto _ : state) {
        net.forward(params, x, cache);
        net.backward(params, cache, g, grad);
        benchmark::DoNotOptimize(grad.data());
    }
}
BENCHMARK(BM_PcnnForwardBackward);

}  // namespace

BENCHMARK_MAIN();
