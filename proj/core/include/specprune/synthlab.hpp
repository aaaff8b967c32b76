#pragma once

#include "specprune/allocation.hpp"
#include "specprune/spectral.hpp"
#include "specprune/tensorio.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace specprune {

/// Synthetic ESD of IID Pareto-distributed eigenvalues with density exponent
/// alpha_true: p(lambda) ~ lambda^{-alpha_true} on [1, inf), i.e. Pareto
/// shape a = alpha_true - 1. Sampled by inverse CDF from xoshiro256**
/// uniforms, so identical across platforms for a given seed.
struct SyntheticEnsemble {
    double alpha_true = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    Esd esd;
};

SyntheticEnsemble sample_pareto_esd(double alpha_true, std::size_t n, std::uint64_t seed);

struct CorrelationRow {
    double alpha_true = 0.0;
    std::uint64_t seed = 0;
    double alpha_hill = 0.0;
    double stable_rank = 0.0;
};

struct CorrelationResult {
    std::vector<CorrelationRow> rows;
    bool r_defined = false;
    double pearson_r = 0.0; // between alpha_hill and stable_rank over all rows

    // Trend statistics over per-exponent means (the plotted mean curve):
    // pair (mean alpha_hill, mean stable_rank) per grid point.
    std::vector<double> grid;              // alpha_true values in grid order
    std::vector<double> mean_alpha_hill;   // per grid point
    std::vector<double> mean_stable_rank;  // per grid point
    bool trend_r_defined = false;
    double trend_pearson_r = 0.0;
};

/// One ensemble per (alpha, seed) pair; seeds are base_seed + j for
/// j in [0, n_seeds).
CorrelationResult correlation_experiment(std::span<const double> alpha_grid, std::size_t n,
                                         std::size_t n_seeds, std::uint64_t base_seed);

/// CSV with header alpha_true,seed,alpha_hill,stable_rank.
std::string correlation_csv(const CorrelationResult & result);

double pearson(std::span<const double> x, std::span<const double> y);

struct LraStrategyReport {
    struct Side {
        std::string strategy;
        std::vector<std::pair<std::string, int>> ranks;
        double total_reconstruction_error = 0.0; // Frobenius over all truncated matrices
    };
    Side more_on_ht;
    Side less_on_ht;
};

/// Run the kept-rank allocation under both assignment strategies over the
/// store's grouped matrices (quality = alpha_hill) and report per-layer
/// ranks and reconstruction error for each.
LraStrategyReport lra_strategy_experiment(const WeightStore & store, const BlockGrouping & grouping,
                                          std::size_t keep_budget, double tau = 0.2, int threads = 1);

std::string lra_strategy_csv(const LraStrategyReport & report);

} // namespace specprune
