#include "specprune/metrics.hpp"
#include "specprune/rng.hpp"
#include "specprune/spectral.hpp"
#include "specprune/synthlab.hpp"

#include <benchmark/benchmark.h>

using namespace specprune;

namespace {

Eigen::MatrixXd random_matrix(int n, std::uint64_t seed) {
    Xoshiro256ss rng(seed);
    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            m(r, c) = rng.normal();
        }
    }
    return m;
}

} // namespace

static void BM_ComputeEsd(benchmark::State & state) {
    const Eigen::MatrixXd w = random_matrix(static_cast<int>(state.range(0)), 7);
    for (auto _ : state) {
        const Esd esd = compute_esd(w);
        benchmark::DoNotOptimize(esd.eigenvalues.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ComputeEsd)->RangeMultiplier(2)->Range(64, 1024)->Complexity()->Unit(benchmark::kMillisecond);

static void BM_PlAlphaHill(benchmark::State & state) {
    const SyntheticEnsemble ens = sample_pareto_esd(2.5, static_cast<std::size_t>(state.range(0)), 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(pl_alpha_hill(ens.esd).alpha);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PlAlphaHill)->RangeMultiplier(10)->Range(1000, 1000000)->Complexity();

static void BM_HillAlpha(benchmark::State & state) {
    const SyntheticEnsemble ens = sample_pareto_esd(2.5, 100000, 3);
    const int k = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(hill_alpha(ens.esd, k));
    }
}
BENCHMARK(BM_HillAlpha)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
