#include "specprune/compression.hpp"
#include "specprune/rng.hpp"

#include <benchmark/benchmark.h>

using namespace specprune;

namespace {

std::vector<float> random_weights(std::size_t n, std::uint64_t seed) {
    Xoshiro256ss rng(seed);
    std::vector<float> w(n);
    for (float & v : w) {
        v = static_cast<float>(rng.normal());
    }
    return w;
}

} // namespace

static void BM_MagnitudePrune(benchmark::State & state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const auto w = random_weights(n * n, 11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(magnitude_prune(w, n, n, 0.7).data.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_MagnitudePrune)->RangeMultiplier(2)->Range(64, 1024)->Unit(benchmark::kMillisecond);

static void BM_NmPrune(benchmark::State & state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const auto w = random_weights(n * n, 12);
    for (auto _ : state) {
        benchmark::DoNotOptimize(nm_prune(w, n, n, 2, 8).data.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(n * n));
}
BENCHMARK(BM_NmPrune)->RangeMultiplier(2)->Range(64, 1024)->Unit(benchmark::kMillisecond);

static void BM_RtnQuantize(benchmark::State & state) {
    const auto w = random_weights(1 << 20, 13);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rtn_quantize(w, static_cast<int>(state.range(0))).data());
    }
}
BENCHMARK(BM_RtnQuantize)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
