#pragma once

#include "specprune/error.hpp"
#include "specprune/metrics.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace specprune {

enum class Granularity { per_block, per_matrix, mixed };

bool granularity_from_name(const std::string & name, Granularity & out);
const char * granularity_name(Granularity g);

/// Result of the linear-map allocation over an abstract unit list (blocks or
/// matrices), aligned with the input quality vector.
struct BlockAllocation {
    std::vector<double> sparsity; // each in [0, 1]
    double eta = 0.0;             // final normalization factor for unclamped units
    double s1 = 0.0;
    double s2 = 0.0;
    std::vector<std::size_t> clamped; // indices pinned at 0 or 1 during redistribution
};

/// Linear quality-to-sparsity map with budget normalization:
///   phi_i = eta * [ (q_i - q_min)/(q_max - q_min) * (s2 - s1) + s1 ],
/// eta chosen so sum(phi_i * d_i) = target_global * sum(d_i). Out-of-range
/// values are pinned at the bound and eta is re-solved over the rest until a
/// fixpoint. Constant q (or s1 == s2) collapses to the uniform plan exactly.
BlockAllocation allocate_sparsity(std::span<const double> q, std::span<const double> d,
                                  double target_global, double s1, double s2);

/// Same, parameterized by tau: s1 = 1 - tau, s2 = 1 + tau.
BlockAllocation allocate_sparsity_tau(std::span<const double> q, std::span<const double> d,
                                      double target_global, double tau);

/// Per-matrix sparsity plan, the interchange artifact external pruners consume.
struct SparsityPlan {
    std::vector<std::pair<std::string, double>> per_matrix; // deterministic order
    double target_global = 0.0;
    double tau = -1.0; // < 0 when endpoints were supplied directly
    double s1 = 0.0;
    double s2 = 0.0;
    Granularity granularity = Granularity::per_block;
    double eta = 0.0;
    std::vector<std::string> clamped;
    std::string metric;

    double sparsity_for(const std::string & name) const;
};

/// Spread a block-level allocation onto the blocks' member matrices and
/// re-verify the budget identity over matrices.
SparsityPlan expand_to_matrices(const BlockAllocation & alloc, const BlockGrouping & grouping,
                                const WeightStore & store, double target_global);

/// One unit (matrix) inside a block, for mixed/per-matrix allocation.
struct UnitQuality {
    std::string name;
    double q = 0.0;
    double d = 0.0;
};

struct BlockUnits {
    int index = 0;
    double block_q = 0.0;
    std::vector<UnitQuality> members;
};

/// Per-matrix signed qualities grouped by block, built from an analysis.
/// The metric's direction sign is applied here (so larger unit q always means
/// "prune more"); matrices whose fit failed inherit their block's mean
/// quality. Members are sorted by name.
std::vector<BlockUnits> build_block_units(const ModelAnalysis & analysis, MetricName metric);

/// Spread a block-level allocation over BlockUnits members and re-verify the
/// budget identity; the report-driven twin of expand_to_matrices.
SparsityPlan expand_to_units(const BlockAllocation & alloc, const std::vector<BlockUnits> & blocks,
                             double target_global);

/// Mixed granularity: the linear map over blocks at tau_block, then again
/// inside each block over its members at tau_matrix with the block's sparsity
/// as the local budget. tau_matrix = 0 or single-member blocks reduce to
/// per-block.
SparsityPlan allocate_mixed(const std::vector<BlockUnits> & blocks, double target_global,
                            double tau_block, double tau_matrix);

/// Per-matrix granularity: the linear map directly over matrices.
SparsityPlan allocate_per_matrix(const std::vector<UnitQuality> & units, double target_global,
                                 double s1, double s2);

/// Solve for endpoints (s1, 2 - s1) such that the resulting plan's minimum
/// unit sparsity equals min_sparsity while the global budget stays at
/// target_global. Bisection on s1 with 1e-8 tolerance.
std::pair<double, double> min_sparsity_endpoints(double target_global, double min_sparsity,
                                                 std::span<const double> q, std::span<const double> d);

// ---------------------------------------------------------------------------
// integer budget plans

enum class BudgetKind { nm, bits, ranks };

bool budget_kind_from_name(const std::string & name, BudgetKind & out);
const char * budget_kind_name(BudgetKind kind);

struct BudgetPlan {
    BudgetKind kind = BudgetKind::nm;
    double budget = 0.0;      // average N / average bits / total kept rank
    std::vector<int> options; // allowed integer values (for nm: 1..M)
    std::vector<std::pair<std::string, int>> per_layer;

    int value_for(const std::string & name) const;
};

/// N-of-M density allocation: continuous densities from the linear map,
/// rounded to N_i = round(density_i * M) in [1, M], then greedily stepped on
/// the quality-most-favored layer until the kept parameter count matches
/// target_avg_density * sum(d) within one group quantum (max_i d_i / M).
BudgetPlan allocate_nm(const std::vector<UnitQuality> & units, int m_group,
                       double target_avg_density, double tau = 0.2);

/// Bit-width allocation: layers ascending in q are filled with descending
/// precision under the budget target_avg_bits * sum(d); never exceeds the
/// budget by more than a single upgrade step. Monotone non-increasing in q;
/// equal q broken by layer index.
BudgetPlan allocate_bits(const std::vector<UnitQuality> & units, std::vector<int> options,
                         double target_avg_bits);

enum class RankStrategy { more_on_ht, less_on_ht };

struct UnitRank {
    std::string name;
    double q = 0.0;
    int full_rank = 0;
};

/// Kept-rank allocation: the linear map applied to q (more_on_ht) or -q
/// (less_on_ht) gives kept fractions, scaled and rounded so the kept ranks
/// sum to keep_budget exactly, each in [1, full_rank].
BudgetPlan allocate_ranks(const std::vector<UnitRank> & units, std::size_t keep_budget,
                          RankStrategy strategy, double tau = 0.2);

// ---------------------------------------------------------------------------
// plan (de)serialization; schemas are documented in the README

std::string sparsity_plan_to_json(const SparsityPlan & plan);
SparsityPlan sparsity_plan_from_json(const std::string & text);

std::string budget_plan_to_json(const BudgetPlan & plan);
BudgetPlan budget_plan_from_json(const std::string & text);

/// True if the JSON text carries a "kind" field (i.e. is a BudgetPlan).
bool json_is_budget_plan(const std::string & text);

} // namespace specprune
