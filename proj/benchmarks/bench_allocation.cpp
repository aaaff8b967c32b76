#include "specprune/allocation.hpp"
#include "specprune/rng.hpp"

#include <benchmark/benchmark.h>

using namespace specprune;

static void BM_AllocateSparsity(benchmark::State & state) {
    Xoshiro256ss rng(5);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<double> q(n), d(n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = rng.uniform(2.0, 6.0);
        d[i] = static_cast<double>(1 + rng.below(1 << 22));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(allocate_sparsity_tau(q, d, 0.7, 0.3).sparsity.data());
    }
}
BENCHMARK(BM_AllocateSparsity)->Arg(32)->Arg(80)->Arg(256);

static void BM_MinSparsityEndpoints(benchmark::State & state) {
    Xoshiro256ss rng(6);
    const std::size_t n = 32;
    std::vector<double> q(n), d(n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = rng.uniform(2.0, 6.0);
        d[i] = static_cast<double>(1 + rng.below(1 << 22));
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(min_sparsity_endpoints(0.7, 0.57, q, d).first);
    }
}
BENCHMARK(BM_MinSparsityEndpoints);
