#include "specprune/synthlab.hpp"

#include "specprune/compression.hpp"
#include "specprune/metrics.hpp"
#include "specprune/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace specprune {

using ordered_json = nlohmann::ordered_json;

SyntheticEnsemble sample_pareto_esd(double alpha_true, std::size_t n, std::uint64_t seed) {
    if (!(alpha_true > 1.0)) {
        throw_usage("Pareto density exponent must exceed 1 (infinite-mean regime unsupported)");
    }
    if (n < 10) {
        throw_usage("ensemble size must be at least 10");
    }
    SyntheticEnsemble ens;
    ens.alpha_true = alpha_true;
    ens.n = n;
    ens.seed = seed;
    ens.esd.eigenvalues.resize(n);

    Xoshiro256ss rng(seed);
    const double exponent = -1.0 / (alpha_true - 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        ens.esd.eigenvalues[i] = std::pow(rng.uniform01(), exponent);
    }
    std::sort(ens.esd.eigenvalues.begin(), ens.esd.eigenvalues.end());
    return ens;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

CorrelationResult correlation_experiment(std::span<const double> alpha_grid, std::size_t n,
                                         std::size_t n_seeds, std::uint64_t base_seed) {
    if (alpha_grid.empty() || n_seeds == 0) {
        throw_usage("correlation experiment needs a nonempty grid and at least one seed");
    }
    CorrelationResult result;
    for (double alpha : alpha_grid) {
        double sum_hill = 0.0;
        double sum_sr = 0.0;
        for (std::size_t j = 0; j < n_seeds; ++j) {
            const std::uint64_t seed = base_seed + j;
            const SyntheticEnsemble ens = sample_pareto_esd(alpha, n, seed);
            CorrelationRow row;
            row.alpha_true = alpha;
            row.seed = seed;
            row.alpha_hill = pl_alpha_hill(ens.esd).alpha;
            row.stable_rank = stable_rank(ens.esd);
            sum_hill += row.alpha_hill;
            sum_sr += row.stable_rank;
            result.rows.push_back(row);
        }
        result.grid.push_back(alpha);
        result.mean_alpha_hill.push_back(sum_hill / static_cast<double>(n_seeds));
        result.mean_stable_rank.push_back(sum_sr / static_cast<double>(n_seeds));
    }

    std::vector<double> xs, ys;
    for (const auto & row : result.rows) {
        xs.push_back(row.alpha_hill);
        ys.push_back(row.stable_rank);
    }
    if (xs.size() >= 2) {
        const double r = pearson(xs, ys);
        if (std::isfinite(r)) {
            result.pearson_r = r;
            result.r_defined = true;
        }
    }
    if (result.grid.size() >= 2) {
        const double r = pearson(result.mean_alpha_hill, result.mean_stable_rank);
        if (std::isfinite(r)) {
            result.trend_pearson_r = r;
            result.trend_r_defined = true;
        }
    }
    return result;
}

std::string correlation_csv(const CorrelationResult & result) {
    std::string out = "alpha_true,seed,alpha_hill,stable_rank\n";
    for (const auto & row : result.rows) {
        out += ordered_json(row.alpha_true).dump();
        out += ',';
        out += std::to_string(row.seed);
        out += ',';
        out += ordered_json(row.alpha_hill).dump();
        out += ',';
        out += ordered_json(row.stable_rank).dump();
        out += '\n';
    }
    return out;
}

namespace {

LraStrategyReport::Side run_strategy(const WeightStore & store, const ModelAnalysis & analysis,
                                     std::size_t keep_budget, RankStrategy strategy, double tau) {
    std::vector<UnitRank> units;
    std::size_t full_total = 0;
    for (const auto & m : analysis.matrices) {
        const TensorEntry & entry = store.at(m.name);
        units.push_back(UnitRank{
            m.name,
            m.alpha_hill,
            static_cast<int>(std::min(entry.rows(), entry.cols())),
        });
        full_total += std::min(entry.rows(), entry.cols());
    }
    BudgetPlan plan;
    if (keep_budget == full_total) {
        // boundary case: everything kept, identical under either strategy
        plan.kind = BudgetKind::ranks;
        plan.budget = static_cast<double>(keep_budget);
        int max_full = 0;
        for (const auto & u : units) {
            max_full = std::max(max_full, u.full_rank);
        }
        plan.options.resize(static_cast<std::size_t>(max_full));
        std::iota(plan.options.begin(), plan.options.end(), 1);
        for (const auto & u : units) {
            plan.per_layer.emplace_back(u.name, u.full_rank);
        }
    } else {
        plan = allocate_ranks(units, keep_budget, strategy, tau);
    }
    const auto [compressed, report] = apply_plan(store, plan);
    (void)compressed;

    LraStrategyReport::Side side;
    side.strategy = strategy == RankStrategy::more_on_ht ? "more_on_ht" : "less_on_ht";
    side.ranks = plan.per_layer;
    double acc = 0.0;
    for (const auto & row : report.rows) {
        acc += row.reconstruction_error * row.reconstruction_error;
    }
    side.total_reconstruction_error = std::sqrt(acc);
    return side;
}

} // namespace

LraStrategyReport lra_strategy_experiment(const WeightStore & store, const BlockGrouping & grouping,
                                          std::size_t keep_budget, double tau, int threads) {
    const ModelAnalysis analysis = analyze_model(store, grouping, MetricName::alpha_hill, threads);
    if (!analysis.failures.empty()) {
        std::string names;
        for (const auto & f : analysis.failures) {
            names += (names.empty() ? "" : ", ") + f.name;
        }
        throw_data("cannot run LRA experiment, spectral fit failed for: " + names);
    }
    LraStrategyReport report;
    report.more_on_ht = run_strategy(store, analysis, keep_budget, RankStrategy::more_on_ht, tau);
    report.less_on_ht = run_strategy(store, analysis, keep_budget, RankStrategy::less_on_ht, tau);
    return report;
}

std::string lra_strategy_csv(const LraStrategyReport & report) {
    std::string out = "strategy,name,kept_rank\n";
    for (const auto * side : {&report.more_on_ht, &report.less_on_ht}) {
        for (const auto & [name, rank] : side->ranks) {
            out += side->strategy;
            out += ',';
            out += name;
            out += ',';
            out += std::to_string(rank);
            out += '\n';
        }
    }
    out += "strategy,total_reconstruction_error,\n";
    for (const auto * side : {&report.more_on_ht, &report.less_on_ht}) {
        out += side->strategy;
        out += ',';
        out += ordered_json(side->total_reconstruction_error).dump();
        out += ",\n";
    }
    return out;
}

} // namespace specprune
