#include "specprune/allocation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace specprune {

using ordered_json = nlohmann::ordered_json;

bool granularity_from_name(const std::string & name, Granularity & out) {
    if (name == "per_block") { out = Granularity::per_block; return true; }
    if (name == "per_matrix") { out = Granularity::per_matrix; return true; }
    if (name == "mixed") { out = Granularity::mixed; return true; }
    return false;
}

const char * granularity_name(Granularity g) {
    switch (g) {
        case Granularity::per_block: return "per_block";
        case Granularity::per_matrix: return "per_matrix";
        case Granularity::mixed: return "mixed";
    }
    return "?";
}

double SparsityPlan::sparsity_for(const std::string & name) const {
    for (const auto & [n, s] : per_matrix) {
        if (n == name) {
            return s;
        }
    }
    throw_data("plan has no entry for tensor '" + name + "'");
}

int BudgetPlan::value_for(const std::string & name) const {
    for (const auto & [n, v] : per_layer) {
        if (n == name) {
            return v;
        }
    }
    throw_data("plan has no entry for layer '" + name + "'");
}

// ---------------------------------------------------------------------------
// linear quality-to-sparsity map with budget normalization

BlockAllocation allocate_sparsity(std::span<const double> q, std::span<const double> d,
                                  double target_global, double s1, double s2) {
    const std::size_t n = q.size();
    if (n == 0 || d.size() != n) {
        throw_usage("quality and parameter-count vectors must be nonempty and aligned");
    }
    for (double di : d) {
        if (!(di > 0.0)) {
            throw_usage("parameter counts must be positive");
        }
    }
    if (!(target_global > 0.0 && target_global < 1.0)) {
        throw_usage("global sparsity must lie in (0, 1)");
    }
    if (s2 < s1) {
        throw_usage("endpoint s2 must be >= s1");
    }
    if (s1 < 0.0) {
        throw_usage("endpoint s1 must be >= 0");
    }

    BlockAllocation out;
    out.s1 = s1;
    out.s2 = s2;

    const double q_min = *std::min_element(q.begin(), q.end());
    const double q_max = *std::max_element(q.begin(), q.end());

    // Constant quality or collapsed endpoints: the map is uniform by
    // construction, so emit the target exactly.
    if (q_max == q_min || s1 == s2) {
        out.sparsity.assign(n, target_global);
        out.eta = s1 > 0.0 ? target_global / s1 : 0.0;
        return out;
    }

    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        raw[i] = (q[i] - q_min) / (q_max - q_min) * (s2 - s1) + s1;
    }

    const double total_d = std::accumulate(d.begin(), d.end(), 0.0);

    enum class Pin { free, at_zero, at_one };
    std::vector<Pin> pin(n, Pin::free);
    out.sparsity.assign(n, 0.0);

    double eta = 0.0;
    for (std::size_t round = 0; round <= n; ++round) {
        double pinned_budget = 0.0;
        double denom = 0.0;
        std::size_t free_count = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pin[i] == Pin::at_one) {
                pinned_budget += d[i];
            } else if (pin[i] == Pin::free) {
                denom += raw[i] * d[i];
                ++free_count;
            }
        }
        const double free_budget = target_global * total_d - pinned_budget;

        if (free_count == 0) {
            if (std::abs(free_budget) > 1e-9 * total_d) {
                throw_infeasible("sparsity budget cannot be met after clamping");
            }
            break;
        }
        if (denom <= 0.0) {
            if (std::abs(free_budget) <= 1e-9 * total_d) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (pin[i] == Pin::free) {
                        out.sparsity[i] = 0.0;
                    }
                }
                break;
            }
            throw_infeasible("sparsity budget cannot be met: remaining layers are pinned at zero "
                             "by the endpoint mapping");
        }
        eta = free_budget / denom;
        if (eta < 0.0) {
            throw_infeasible("sparsity budget cannot be met after clamping");
        }

        bool newly_pinned = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (pin[i] != Pin::free) {
                continue;
            }
            const double phi = eta * raw[i];
            if (phi > 1.0) {
                pin[i] = Pin::at_one;
                out.sparsity[i] = 1.0;
                out.clamped.push_back(i);
                newly_pinned = true;
            } else if (phi < 0.0) {
                pin[i] = Pin::at_zero;
                out.sparsity[i] = 0.0;
                out.clamped.push_back(i);
                newly_pinned = true;
            } else {
                out.sparsity[i] = phi;
            }
        }
        if (!newly_pinned) {
            break;
        }
    }

    out.eta = eta;
    std::sort(out.clamped.begin(), out.clamped.end());
    return out;
}

BlockAllocation allocate_sparsity_tau(std::span<const double> q, std::span<const double> d,
                                      double target_global, double tau) {
    if (tau < 0.0 || tau > 1.0) {
        throw_usage("tau must lie in [0, 1]");
    }
    return allocate_sparsity(q, d, target_global, 1.0 - tau, 1.0 + tau);
}

namespace {

void verify_budget_identity(const std::vector<std::pair<std::string, double>> & per_matrix,
                            const std::vector<double> & d, double target_global) {
    double total = 0.0;
    double hit = 0.0;
    for (std::size_t i = 0; i < per_matrix.size(); ++i) {
        total += d[i];
        hit += per_matrix[i].second * d[i];
    }
    if (std::abs(hit - target_global * total) > 1e-9 * total) {
        throw_data("internal error: budget identity violated after expansion");
    }
}

} // namespace

SparsityPlan expand_to_matrices(const BlockAllocation & alloc, const BlockGrouping & grouping,
                                const WeightStore & store, double target_global) {
    if (alloc.sparsity.size() != grouping.blocks.size()) {
        throw_usage("block allocation does not cover every block");
    }
    SparsityPlan plan;
    plan.target_global = target_global;
    plan.s1 = alloc.s1;
    plan.s2 = alloc.s2;
    plan.eta = alloc.eta;
    plan.granularity = Granularity::per_block;

    std::vector<double> d;
    for (std::size_t b = 0; b < grouping.blocks.size(); ++b) {
        const bool clamped = std::binary_search(alloc.clamped.begin(), alloc.clamped.end(), b);
        for (const auto & name : grouping.blocks[b].matrix_names) {
            if (!store.contains(name)) {
                throw_data("grouping references missing tensor '" + name + "'");
            }
            plan.per_matrix.emplace_back(name, alloc.sparsity[b]);
            d.push_back(static_cast<double>(store.at(name).numel()));
            if (clamped) {
                plan.clamped.push_back(name);
            }
        }
    }
    verify_budget_identity(plan.per_matrix, d, target_global);
    return plan;
}

SparsityPlan allocate_per_matrix(const std::vector<UnitQuality> & units, double target_global,
                                 double s1, double s2) {
    std::vector<double> q, d;
    q.reserve(units.size());
    d.reserve(units.size());
    for (const auto & u : units) {
        q.push_back(u.q);
        d.push_back(u.d);
    }
    const BlockAllocation alloc = allocate_sparsity(q, d, target_global, s1, s2);

    SparsityPlan plan;
    plan.target_global = target_global;
    plan.s1 = s1;
    plan.s2 = s2;
    plan.eta = alloc.eta;
    plan.granularity = Granularity::per_matrix;
    for (std::size_t i = 0; i < units.size(); ++i) {
        plan.per_matrix.emplace_back(units[i].name, alloc.sparsity[i]);
    }
    for (std::size_t i : alloc.clamped) {
        plan.clamped.push_back(units[i].name);
    }
    verify_budget_identity(plan.per_matrix, d, target_global);
    return plan;
}

std::vector<BlockUnits> build_block_units(const ModelAnalysis & analysis, MetricName metric) {
    const double sign = metric_sign(metric);
    const std::vector<BlockQuality> blocks = block_qualities(analysis, metric);
    std::vector<BlockUnits> out;
    for (const auto & b : blocks) {
        BlockUnits units;
        units.index = b.block_index;
        units.block_q = sign * b.q;
        for (const auto & m : analysis.matrices) {
            if (m.block_index == b.block_index) {
                units.members.push_back(UnitQuality{m.name, sign * metric_value(m, metric),
                                                    static_cast<double>(m.param_count)});
            }
        }
        for (const auto & f : analysis.failures) {
            if (f.block_index == b.block_index) {
                units.members.push_back(
                    UnitQuality{f.name, sign * b.q, static_cast<double>(f.param_count)});
            }
        }
        std::sort(units.members.begin(), units.members.end(),
                  [](const UnitQuality & a, const UnitQuality & c) { return a.name < c.name; });
        out.push_back(std::move(units));
    }
    return out;
}

SparsityPlan expand_to_units(const BlockAllocation & alloc, const std::vector<BlockUnits> & blocks,
                             double target_global) {
    if (alloc.sparsity.size() != blocks.size()) {
        throw_usage("block allocation does not cover every block");
    }
    SparsityPlan plan;
    plan.target_global = target_global;
    plan.s1 = alloc.s1;
    plan.s2 = alloc.s2;
    plan.eta = alloc.eta;
    plan.granularity = Granularity::per_block;

    std::vector<double> d;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const bool clamped = std::binary_search(alloc.clamped.begin(), alloc.clamped.end(), b);
        for (const auto & u : blocks[b].members) {
            plan.per_matrix.emplace_back(u.name, alloc.sparsity[b]);
            d.push_back(u.d);
            if (clamped) {
                plan.clamped.push_back(u.name);
            }
        }
    }
    verify_budget_identity(plan.per_matrix, d, target_global);
    return plan;
}

SparsityPlan allocate_mixed(const std::vector<BlockUnits> & blocks, double target_global,
                            double tau_block, double tau_matrix) {
    std::vector<double> block_q, block_d;
    for (const auto & b : blocks) {
        if (b.members.empty()) {
            throw_usage("mixed allocation requires nonempty blocks");
        }
        double d_sum = 0.0;
        for (const auto & u : b.members) {
            d_sum += u.d;
        }
        block_q.push_back(b.block_q);
        block_d.push_back(d_sum);
    }
    const BlockAllocation top = allocate_sparsity_tau(block_q, block_d, target_global, tau_block);

    SparsityPlan plan;
    plan.target_global = target_global;
    plan.tau = tau_block;
    plan.s1 = top.s1;
    plan.s2 = top.s2;
    plan.eta = top.eta;
    plan.granularity = Granularity::mixed;

    std::vector<double> all_d;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto & members = blocks[b].members;
        const double block_s = top.sparsity[b];
        const bool block_clamped = std::binary_search(top.clamped.begin(), top.clamped.end(), b);

        if (members.size() == 1 || block_s <= 0.0 || block_s >= 1.0) {
            // nothing to refine, or the inner budget is degenerate
            for (const auto & u : members) {
                plan.per_matrix.emplace_back(u.name, std::clamp(block_s, 0.0, 1.0));
                all_d.push_back(u.d);
                if (block_clamped) {
                    plan.clamped.push_back(u.name);
                }
            }
            continue;
        }

        std::vector<double> mq, md;
        for (const auto & u : members) {
            mq.push_back(u.q);
            md.push_back(u.d);
        }
        const BlockAllocation inner = allocate_sparsity_tau(mq, md, block_s, tau_matrix);
        for (std::size_t i = 0; i < members.size(); ++i) {
            plan.per_matrix.emplace_back(members[i].name, inner.sparsity[i]);
            all_d.push_back(members[i].d);
        }
        for (std::size_t i : inner.clamped) {
            plan.clamped.push_back(members[i].name);
        }
        if (block_clamped) {
            for (const auto & u : members) {
                plan.clamped.push_back(u.name);
            }
        }
    }
    verify_budget_identity(plan.per_matrix, all_d, target_global);
    return plan;
}

std::pair<double, double> min_sparsity_endpoints(double target_global, double min_sparsity,
                                                 std::span<const double> q, std::span<const double> d) {
    if (!(min_sparsity > 0.0 && min_sparsity < target_global)) {
        throw_infeasible("minimum sparsity must lie strictly below the global sparsity");
    }

    auto plan_min = [&](double s1) {
        const BlockAllocation alloc = allocate_sparsity(q, d, target_global, s1, 2.0 - s1);
        return *std::min_element(alloc.sparsity.begin(), alloc.sparsity.end());
    };

    double lo = 1e-9;
    double hi = 1.0;
    if (plan_min(lo) > min_sparsity) {
        throw_infeasible("requested minimum sparsity is below the attainable range");
    }
    // plan_min(1) == target_global > min_sparsity, so the root is bracketed.
    while (hi - lo > 1e-8) {
        const double mid = 0.5 * (lo + hi);
        if (plan_min(mid) < min_sparsity) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double s1 = 0.5 * (lo + hi);
    return {s1, 2.0 - s1};
}

// ---------------------------------------------------------------------------
// integer budget plans

bool budget_kind_from_name(const std::string & name, BudgetKind & out) {
    if (name == "nm") { out = BudgetKind::nm; return true; }
    if (name == "bits") { out = BudgetKind::bits; return true; }
    if (name == "ranks") { out = BudgetKind::ranks; return true; }
    return false;
}

const char * budget_kind_name(BudgetKind kind) {
    switch (kind) {
        case BudgetKind::nm: return "nm";
        case BudgetKind::bits: return "bits";
        case BudgetKind::ranks: return "ranks";
    }
    return "?";
}

BudgetPlan allocate_nm(const std::vector<UnitQuality> & units, int m_group,
                       double target_avg_density, double tau) {
    if (m_group < 2) {
        throw_usage("N:M group size M must be >= 2");
    }
    if (!(target_avg_density > 0.0 && target_avg_density <= 1.0)) {
        throw_usage("target average density must lie in (0, 1]");
    }
    if (units.empty()) {
        throw_usage("no layers to allocate");
    }
    const std::size_t n = units.size();

    std::vector<double> q, d;
    for (const auto & u : units) {
        q.push_back(u.q);
        d.push_back(u.d);
    }
    const double total_d = std::accumulate(d.begin(), d.end(), 0.0);
    const double target_kept = target_avg_density * total_d;

    std::vector<int> nvals(n);
    if (target_avg_density >= 1.0) {
        std::fill(nvals.begin(), nvals.end(), m_group);
    } else {
        const BlockAllocation alloc = allocate_sparsity_tau(q, d, 1.0 - target_avg_density, tau);
        for (std::size_t i = 0; i < n; ++i) {
            const double density = 1.0 - alloc.sparsity[i];
            nvals[i] = std::clamp(static_cast<int>(std::lround(density * m_group)), 1, m_group);
        }
    }

    auto kept = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += nvals[i] * d[i] / m_group;
        }
        return s;
    };

    // Greedy adjustment: always step the layer whose quality most favors the
    // change (decrement the least heavy-tailed, increment the most), among
    // steps that strictly shrink the budget error. Monotonicity is a hard
    // constraint: a layer never drops below any higher-q layer or rises above
    // any lower-q one.
    auto can_decrement = [&](std::size_t i) {
        if (nvals[i] <= 1) {
            return false;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (q[j] > q[i] && nvals[j] >= nvals[i]) {
                return false;
            }
        }
        return true;
    };
    auto can_increment = [&](std::size_t i) {
        if (nvals[i] >= m_group) {
            return false;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (q[j] < q[i] && nvals[j] <= nvals[i]) {
                return false;
            }
        }
        return true;
    };

    double err = kept() - target_kept;
    for (;;) {
        std::size_t best = n;
        if (err > 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!can_decrement(i) || std::abs(err - d[i] / m_group) >= std::abs(err)) {
                    continue;
                }
                if (best == n || q[i] > q[best] || (q[i] == q[best] && nvals[i] > nvals[best])) {
                    best = i;
                }
            }
            if (best == n) {
                break;
            }
            --nvals[best];
            err -= d[best] / m_group;
        } else if (err < 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!can_increment(i) || std::abs(err + d[i] / m_group) >= std::abs(err)) {
                    continue;
                }
                if (best == n || q[i] < q[best] || (q[i] == q[best] && nvals[i] < nvals[best])) {
                    best = i;
                }
            }
            if (best == n) {
                break;
            }
            ++nvals[best];
            err += d[best] / m_group;
        } else {
            break;
        }
    }

    const double quantum = *std::max_element(d.begin(), d.end()) / m_group;
    if (std::abs(err) > quantum + 1e-9 * total_d) {
        throw_infeasible("N:M parameter budget unattainable within one group quantum");
    }

    BudgetPlan plan;
    plan.kind = BudgetKind::nm;
    plan.budget = target_avg_density * m_group;
    plan.options.resize(static_cast<std::size_t>(m_group));
    std::iota(plan.options.begin(), plan.options.end(), 1);
    for (std::size_t i = 0; i < n; ++i) {
        plan.per_layer.emplace_back(units[i].name, nvals[i]);
    }
    return plan;
}

namespace {

// Exact search for the monotone (non-increasing in q) assignment whose
// weighted bit total comes closest to the budget from below, preferring
// higher precision on more heavy-tailed layers among ties. Depth-first over
// layers in ascending-q order, levels tried high to low, with bound pruning.
struct BitSearch {
    const std::vector<double> & d; // in sorted order
    const std::vector<int> & options;
    double budget;
    std::vector<double> suffix_d;
    std::vector<std::size_t> best_levels;
    std::vector<std::size_t> levels;
    double best_total = -1.0;

    BitSearch(const std::vector<double> & d_, const std::vector<int> & options_, double budget_)
        : d(d_), options(options_), budget(budget_) {
        const std::size_t n = d.size();
        suffix_d.assign(n + 1, 0.0);
        for (std::size_t i = n; i-- > 0;) {
            suffix_d[i] = suffix_d[i + 1] + d[i];
        }
        levels.assign(n, 0);
        best_levels.assign(n, 0);
    }

    void run(std::size_t i, std::size_t cap, double partial) {
        const std::size_t n = d.size();
        if (i == n) {
            if (partial > best_total) {
                best_total = partial;
                best_levels = levels;
            }
            return;
        }
        for (std::size_t level = cap + 1; level-- > 0;) {
            const double t = partial + options[level] * d[i];
            if (t + options.front() * suffix_d[i + 1] > budget + 1e-9 * budget) {
                continue; // cannot stay under budget even at minimum precision
            }
            if (t + options[level] * suffix_d[i + 1] <= best_total) {
                continue; // cannot beat the incumbent
            }
            levels[i] = level;
            run(i + 1, level, t);
        }
    }
};

} // namespace

BudgetPlan allocate_bits(const std::vector<UnitQuality> & units, std::vector<int> options,
                         double target_avg_bits) {
    if (options.empty()) {
        throw_usage("bit-width option set is empty");
    }
    if (units.empty()) {
        throw_usage("no layers to allocate");
    }
    std::sort(options.begin(), options.end());
    options.erase(std::unique(options.begin(), options.end()), options.end());
    if (target_avg_bits < options.front() || target_avg_bits > options.back()) {
        throw_usage("target average bits outside the option range");
    }

    const std::size_t n = units.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (units[a].q != units[b].q) {
            return units[a].q < units[b].q;
        }
        return a < b; // stable: ties by layer index
    });

    double total_d = 0.0;
    std::vector<double> sorted_d(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
        sorted_d[pos] = units[order[pos]].d;
        total_d += units[order[pos]].d;
    }
    const double budget = target_avg_bits * total_d;

    BitSearch search(sorted_d, options, budget);
    search.run(0, options.size() - 1, 0.0);
    std::vector<std::size_t> level(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
        level[order[pos]] = search.best_levels[pos];
    }

    // One optional extra step if it lands strictly closer to the budget;
    // this is the single quantum the plan may overshoot by.
    const double err = search.best_total - budget;
    std::size_t best = n;
    double best_err = std::abs(err);
    std::size_t prev_level = options.size() - 1;
    for (std::size_t pos = 0; pos < n; ++pos) {
        const std::size_t i = order[pos];
        if (level[i] < prev_level) {
            const double delta = (options[level[i] + 1] - options[level[i]]) * units[i].d;
            if (std::abs(err + delta) < best_err) {
                best = i;
                best_err = std::abs(err + delta);
            }
        }
        prev_level = level[i];
    }
    if (best != n) {
        ++level[best];
    }

    BudgetPlan plan;
    plan.kind = BudgetKind::bits;
    plan.budget = target_avg_bits;
    plan.options = options;
    for (std::size_t i = 0; i < n; ++i) {
        plan.per_layer.emplace_back(units[i].name, options[level[i]]);
    }
    return plan;
}

BudgetPlan allocate_ranks(const std::vector<UnitRank> & units, std::size_t keep_budget,
                          RankStrategy strategy, double tau) {
    if (units.empty()) {
        throw_usage("no layers to allocate");
    }
    std::size_t full_total = 0;
    for (const auto & u : units) {
        if (u.full_rank < 1) {
            throw_usage("full ranks must be >= 1");
        }
        full_total += static_cast<std::size_t>(u.full_rank);
    }
    if (keep_budget == 0 || keep_budget >= full_total) {
        throw_usage("keep budget must lie in (0, sum of full ranks)");
    }
    if (keep_budget < units.size()) {
        throw_infeasible("keep budget smaller than one rank per layer");
    }

    const std::size_t n = units.size();
    std::vector<double> q(n), d(n);
    for (std::size_t i = 0; i < n; ++i) {
        q[i] = strategy == RankStrategy::more_on_ht ? units[i].q : -units[i].q;
        d[i] = static_cast<double>(units[i].full_rank);
    }
    const double keep_fraction = static_cast<double>(keep_budget) / static_cast<double>(full_total);
    const BlockAllocation alloc = allocate_sparsity_tau(q, d, keep_fraction, tau);

    std::vector<double> target(n);
    std::vector<int> kept(n);
    long long total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        target[i] = alloc.sparsity[i] * units[i].full_rank;
        kept[i] = std::clamp(static_cast<int>(std::lround(target[i])), 1, units[i].full_rank);
        total += kept[i];
    }

    // Exact-sum adjustment: walk the largest rounding surplus/deficit.
    while (total != static_cast<long long>(keep_budget)) {
        std::size_t best = n;
        if (total > static_cast<long long>(keep_budget)) {
            for (std::size_t i = 0; i < n; ++i) {
                if (kept[i] <= 1) {
                    continue;
                }
                if (best == n || kept[i] - target[i] > kept[best] - target[best]) {
                    best = i;
                }
            }
            if (best == n) {
                throw_infeasible("rank budget unattainable");
            }
            --kept[best];
            --total;
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                if (kept[i] >= units[i].full_rank) {
                    continue;
                }
                if (best == n || kept[i] - target[i] < kept[best] - target[best]) {
                    best = i;
                }
            }
            if (best == n) {
                throw_infeasible("rank budget unattainable");
            }
            ++kept[best];
            ++total;
        }
    }

    BudgetPlan plan;
    plan.kind = BudgetKind::ranks;
    plan.budget = static_cast<double>(keep_budget);
    int max_full = 0;
    for (const auto & u : units) {
        max_full = std::max(max_full, u.full_rank);
    }
    plan.options.resize(static_cast<std::size_t>(max_full));
    std::iota(plan.options.begin(), plan.options.end(), 1);
    for (std::size_t i = 0; i < n; ++i) {
        plan.per_layer.emplace_back(units[i].name, kept[i]);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// JSON

std::string sparsity_plan_to_json(const SparsityPlan & plan) {
    ordered_json doc;
    doc["version"] = 1;
    doc["metric"] = plan.metric;
    doc["granularity"] = granularity_name(plan.granularity);
    doc["S"] = plan.target_global;
    if (plan.tau >= 0.0) {
        doc["tau"] = plan.tau;
    } else {
        doc["tau"] = nullptr;
    }
    doc["s1"] = plan.s1;
    doc["s2"] = plan.s2;
    doc["eta"] = plan.eta;
    doc["clamped"] = plan.clamped;
    ordered_json per = ordered_json::object();
    for (const auto & [name, s] : plan.per_matrix) {
        per[name] = s;
    }
    doc["per_matrix"] = std::move(per);
    return doc.dump(2) + "\n";
}

SparsityPlan sparsity_plan_from_json(const std::string & text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const std::exception & e) {
        throw_data(std::string("malformed plan JSON: ") + e.what());
    }
    SparsityPlan plan;
    try {
        plan.metric = doc.value("metric", std::string{});
        Granularity g;
        if (granularity_from_name(doc.value("granularity", "per_block"), g)) {
            plan.granularity = g;
        }
        plan.target_global = doc.at("S").get<double>();
        plan.tau = doc.contains("tau") && !doc["tau"].is_null() ? doc["tau"].get<double>() : -1.0;
        plan.s1 = doc.value("s1", 0.0);
        plan.s2 = doc.value("s2", 0.0);
        plan.eta = doc.value("eta", 0.0);
        if (doc.contains("clamped")) {
            for (const auto & name : doc["clamped"]) {
                plan.clamped.push_back(name.get<std::string>());
            }
        }
        for (auto it = doc.at("per_matrix").begin(); it != doc.at("per_matrix").end(); ++it) {
            const double s = it.value().get<double>();
            if (s < 0.0 || s > 1.0) {
                throw_data("plan sparsity for '" + it.key() + "' outside [0, 1]");
            }
            plan.per_matrix.emplace_back(it.key(), s);
        }
    } catch (const Error &) {
        throw;
    } catch (const std::exception & e) {
        throw_data(std::string("malformed plan JSON: ") + e.what());
    }
    return plan;
}

std::string budget_plan_to_json(const BudgetPlan & plan) {
    ordered_json doc;
    doc["version"] = 1;
    doc["kind"] = budget_kind_name(plan.kind);
    doc["budget"] = plan.budget;
    doc["options"] = plan.options;
    ordered_json per = ordered_json::object();
    for (const auto & [name, v] : plan.per_layer) {
        per[name] = v;
    }
    doc["per_layer"] = std::move(per);
    return doc.dump(2) + "\n";
}

BudgetPlan budget_plan_from_json(const std::string & text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const std::exception & e) {
        throw_data(std::string("malformed plan JSON: ") + e.what());
    }
    BudgetPlan plan;
    try {
        BudgetKind kind;
        if (!budget_kind_from_name(doc.at("kind").get<std::string>(), kind)) {
            throw_data("unknown budget plan kind '" + doc.at("kind").get<std::string>() + "'");
        }
        plan.kind = kind;
        plan.budget = doc.at("budget").get<double>();
        for (const auto & v : doc.at("options")) {
            plan.options.push_back(v.get<int>());
        }
        for (auto it = doc.at("per_layer").begin(); it != doc.at("per_layer").end(); ++it) {
            const int v = it.value().get<int>();
            if (std::find(plan.options.begin(), plan.options.end(), v) == plan.options.end()) {
                throw_data("plan value for '" + it.key() + "' not in the option set");
            }
            plan.per_layer.emplace_back(it.key(), v);
        }
    } catch (const Error &) {
        throw;
    } catch (const std::exception & e) {
        throw_data(std::string("malformed plan JSON: ") + e.what());
    }
    return plan;
}

bool json_is_budget_plan(const std::string & text) {
    try {
        const auto doc = ordered_json::parse(text);
        return doc.is_object() && doc.contains("kind");
    } catch (const std::exception &) {
        return false;
    }
}

} // namespace specprune
