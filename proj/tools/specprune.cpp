// specprune - weight-spectrum analysis and layer-wise compression toolkit.
//
// Pipeline: analyze a checkpoint's weight matrices (ESD + power-law fit),
// allocate per-layer sparsity / N:M / bit / rank budgets from the metric
// values, apply them, and re-analyze. Synthetic Pareto experiments validate
// the estimators at desk scale.

#include "specprune/allocation.hpp"
#include "specprune/compression.hpp"
#include "specprune/error.hpp"
#include "specprune/metrics.hpp"
#include "specprune/synthlab.hpp"
#include "specprune/tensorio.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace specprune;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 42;
    int threads = 1;
};

std::string read_text_file(const fs::path & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw_data("cannot open file: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_atomic(const fs::path & path, const std::string & text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    write_file_atomic(path, text.data(), text.size());
}

Format parse_format(const std::string & name) {
    Format fmt;
    if (!format_from_name(name, fmt)) {
        throw_usage("unknown checkpoint format '" + name + "' (expected safetensors or rawbin)");
    }
    return fmt;
}

MetricName parse_metric(const std::string & name) {
    MetricName metric;
    if (!metric_from_name(name, metric)) {
        throw_usage("unknown metric '" + name + "'");
    }
    return metric;
}

std::vector<double> parse_double_list(const std::string & text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(std::stod(item));
    }
    return out;
}

std::vector<int> parse_int_list(const std::string & text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(std::stoi(item));
    }
    return out;
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeOpts {
    std::string model;
    std::string format = "safetensors";
    std::string grouping = "llama";
    std::string metric = "alpha_hill";
    std::string out_dir = ".";
};

int cmd_analyze(const AnalyzeOpts & opts, const GlobalOpts & global) {
    const Format fmt = parse_format(opts.format);
    const MetricName metric = parse_metric(opts.metric);

    const WeightStore store = load_checkpoint(opts.model, fmt);
    std::vector<std::string> warnings;
    const BlockGrouping grouping = group_blocks(store, resolve_grouping(opts.grouping), &warnings);
    for (const auto & w : warnings) {
        std::cerr << "warning: " << w << "\n";
    }

    const ModelAnalysis analysis = analyze_model(store, grouping, metric, global.threads);

    write_text_atomic(fs::path(opts.out_dir) / "metrics.json", analysis_to_json(analysis, metric));
    write_text_atomic(fs::path(opts.out_dir) / "metrics.csv", analysis_to_csv(analysis));

    std::cout << "analyzed " << analysis.matrices.size() << " matrices in " << analysis.blocks.size()
              << " blocks (" << analysis.failures.size() << " failures); reports in " << opts.out_dir
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// allocate

struct AllocateOpts {
    std::string metrics_file;
    double sparsity = 0.7;
    double tau = -1.0;
    double tau_matrix = -1.0;
    double s1 = -1.0;
    double s2 = -1.0;
    double min_sparsity = -1.0;
    std::string granularity = "per_block";
    std::string metric; // default: the metric recorded in the report
    std::string out = "plan.json";

    std::string kind = "sparsity";
    int m_group = 8;
    double density = 0.5;
    std::string bit_options = "2,3,4,8";
    double avg_bits = 4.0;
    std::size_t keep_budget = 0;
    std::string strategy = "more_on_ht";
};

std::vector<UnitQuality> block_level_units(const std::vector<BlockUnits> & blocks) {
    std::vector<UnitQuality> out;
    for (const auto & b : blocks) {
        double d = 0.0;
        for (const auto & u : b.members) {
            d += u.d;
        }
        out.push_back(UnitQuality{"block:" + std::to_string(b.index), b.block_q, d});
    }
    return out;
}

// Expand a per-block budget plan so every member matrix carries its block's value.
BudgetPlan expand_budget_plan(const BudgetPlan & block_plan, const std::vector<BlockUnits> & blocks) {
    BudgetPlan plan = block_plan;
    plan.per_layer.clear();
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        for (const auto & u : blocks[i].members) {
            plan.per_layer.emplace_back(u.name, block_plan.per_layer[i].second);
        }
    }
    return plan;
}

int cmd_allocate(const AllocateOpts & opts, const GlobalOpts &) {
    MetricName report_metric = MetricName::alpha_hill;
    const ModelAnalysis analysis = analysis_from_json(read_text_file(opts.metrics_file), &report_metric);
    const MetricName metric = opts.metric.empty() ? report_metric : parse_metric(opts.metric);
    if (analysis.matrices.empty()) {
        throw_data("metrics report contains no matrices");
    }

    if (opts.kind != "sparsity") {
        // integer budget plans: N:M / bits / ranks
        const std::vector<BlockUnits> blocks = build_block_units(analysis, metric);
        const double tau = opts.tau >= 0.0 ? opts.tau : 0.2;
        BudgetPlan plan;
        if (opts.kind == "nm") {
            plan = expand_budget_plan(allocate_nm(block_level_units(blocks), opts.m_group,
                                                  opts.density, tau),
                                      blocks);
        } else if (opts.kind == "bits") {
            plan = expand_budget_plan(allocate_bits(block_level_units(blocks),
                                                    parse_int_list(opts.bit_options), opts.avg_bits),
                                      blocks);
        } else if (opts.kind == "ranks") {
            if (opts.keep_budget == 0) {
                throw_usage("--keep-budget is required for --kind ranks");
            }
            RankStrategy strategy;
            if (opts.strategy == "more_on_ht") {
                strategy = RankStrategy::more_on_ht;
            } else if (opts.strategy == "less_on_ht") {
                strategy = RankStrategy::less_on_ht;
            } else {
                throw_usage("unknown rank strategy '" + opts.strategy + "'");
            }
            const double sign = metric_sign(metric);
            std::vector<UnitRank> units;
            for (const auto & m : analysis.matrices) {
                if (m.rows == 0 || m.cols == 0) {
                    throw_data("metrics report lacks matrix shapes; re-run `analyze`");
                }
                units.push_back(UnitRank{m.name, sign * metric_value(m, metric),
                                         static_cast<int>(std::min(m.rows, m.cols))});
            }
            plan = allocate_ranks(units, opts.keep_budget, strategy, tau);
        } else {
            throw_usage("unknown plan kind '" + opts.kind + "'");
        }
        write_text_atomic(opts.out, budget_plan_to_json(plan));
        std::cout << "wrote " << opts.kind << " plan for " << plan.per_layer.size() << " matrices to "
                  << opts.out << "\n";
        return 0;
    }

    Granularity granularity;
    if (!granularity_from_name(opts.granularity, granularity)) {
        throw_usage("unknown granularity '" + opts.granularity + "'");
    }

    const int n_choices = (opts.tau >= 0.0 ? 1 : 0) + (opts.s1 >= 0.0 || opts.s2 >= 0.0 ? 1 : 0) +
                          (opts.min_sparsity >= 0.0 ? 1 : 0);
    if (n_choices != 1) {
        throw_usage("exactly one of --tau, --s1/--s2, --min-sparsity must be given");
    }
    if ((opts.s1 >= 0.0) != (opts.s2 >= 0.0)) {
        throw_usage("--s1 and --s2 must be given together");
    }

    const std::vector<BlockUnits> blocks = build_block_units(analysis, metric);
    SparsityPlan plan;

    if (granularity == Granularity::mixed) {
        if (opts.tau < 0.0) {
            throw_usage("mixed granularity is parameterized by --tau (and optionally --tau-matrix)");
        }
        const double tau_matrix = opts.tau_matrix >= 0.0 ? opts.tau_matrix : opts.tau / 2.0;
        plan = allocate_mixed(blocks, opts.sparsity, opts.tau, tau_matrix);
        plan.tau = opts.tau;
    } else {
        // collect units at the requested granularity
        std::vector<UnitQuality> units;
        if (granularity == Granularity::per_block) {
            units = block_level_units(blocks);
        } else {
            for (const auto & b : blocks) {
                units.insert(units.end(), b.members.begin(), b.members.end());
            }
        }

        double s1 = opts.s1;
        double s2 = opts.s2;
        double tau = opts.tau;
        if (opts.min_sparsity >= 0.0) {
            std::vector<double> q, d;
            for (const auto & u : units) {
                q.push_back(u.q);
                d.push_back(u.d);
            }
            std::tie(s1, s2) = min_sparsity_endpoints(opts.sparsity, opts.min_sparsity, q, d);
            tau = -1.0;
        } else if (tau >= 0.0) {
            s1 = 1.0 - tau;
            s2 = 1.0 + tau;
        }

        if (granularity == Granularity::per_block) {
            std::vector<double> q, d;
            for (const auto & u : units) {
                q.push_back(u.q);
                d.push_back(u.d);
            }
            const BlockAllocation alloc = allocate_sparsity(q, d, opts.sparsity, s1, s2);
            plan = expand_to_units(alloc, blocks, opts.sparsity);
        } else {
            plan = allocate_per_matrix(units, opts.sparsity, s1, s2);
        }
        plan.tau = tau;
    }

    plan.metric = metric_name(metric);
    write_text_atomic(opts.out, sparsity_plan_to_json(plan));
    std::cout << "wrote sparsity plan (S = " << plan.target_global << ", granularity = "
              << granularity_name(plan.granularity) << ") for " << plan.per_matrix.size()
              << " matrices to " << opts.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// prune

struct PruneOpts {
    std::string model;
    std::string format = "safetensors";
    std::string plan;
    std::string out;
    std::string report; // prefix; default derived from --out
};

int cmd_prune(const PruneOpts & opts, const GlobalOpts &) {
    const Format fmt = parse_format(opts.format);
    const WeightStore store = load_checkpoint(opts.model, fmt);
    const std::string plan_text = read_text_file(opts.plan);

    WeightStore pruned;
    CompressionReport report;
    if (json_is_budget_plan(plan_text)) {
        std::tie(pruned, report) = apply_plan(store, budget_plan_from_json(plan_text));
    } else {
        std::tie(pruned, report) = apply_plan(store, sparsity_plan_from_json(plan_text));
    }

    if (fs::path(opts.out).has_parent_path()) {
        fs::create_directories(fs::path(opts.out).parent_path());
    }
    save_checkpoint(pruned, opts.out, fmt);

    const std::string prefix = opts.report.empty() ? opts.out + ".report" : opts.report;
    write_text_atomic(prefix + ".json", compression_report_to_json(report));
    write_text_atomic(prefix + ".csv", compression_report_to_csv(report));

    std::printf("global achieved sparsity: %.6f\n", report.global_achieved_sparsity);
    return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthCorrelationOpts {
    std::string alphas = "1.5,2.0,2.5,3.0,3.5,4.0";
    std::size_t n = 10000;
    std::size_t seeds = 5;
    std::string out = "correlation.csv";
};

int cmd_synth_correlation(const SynthCorrelationOpts & opts, const GlobalOpts & global) {
    const std::vector<double> grid = parse_double_list(opts.alphas);
    const CorrelationResult result = correlation_experiment(grid, opts.n, opts.seeds, global.seed);
    write_text_atomic(opts.out, correlation_csv(result));
    if (result.r_defined) {
        std::printf("pearson r(alpha_hill, stable_rank) = %.6f over %zu ensembles\n", result.pearson_r,
                    result.rows.size());
    } else {
        std::printf("pearson r undefined (%zu ensembles)\n", result.rows.size());
    }
    if (result.trend_r_defined) {
        std::printf("trend pearson r over %zu grid means = %.6f\n", result.grid.size(),
                    result.trend_pearson_r);
    }
    return 0;
}

struct SynthLraOpts {
    std::string model;
    std::string format = "safetensors";
    std::string grouping = "llama";
    std::size_t keep_budget = 0;
    double tau = 0.2;
    std::string out = "lra.csv";
};

int cmd_synth_lra(const SynthLraOpts & opts, const GlobalOpts & global) {
    const Format fmt = parse_format(opts.format);
    const WeightStore store = load_checkpoint(opts.model, fmt);
    const BlockGrouping grouping = group_blocks(store, resolve_grouping(opts.grouping));
    const LraStrategyReport report =
        lra_strategy_experiment(store, grouping, opts.keep_budget, opts.tau, global.threads);
    write_text_atomic(opts.out, lra_strategy_csv(report));
    std::printf("more_on_ht total reconstruction error: %.6g\n",
                report.more_on_ht.total_reconstruction_error);
    std::printf("less_on_ht total reconstruction error: %.6g\n",
                report.less_on_ht.total_reconstruction_error);
    return 0;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"weight-spectrum analysis and layer-wise compression toolkit"};
    app.require_subcommand(1);

    GlobalOpts global;
    app.add_option("--seed", global.seed, "base seed for all randomized experiments");
    app.add_option("--threads", global.threads, "worker threads for per-matrix analysis");

    AnalyzeOpts analyze;
    auto * cmd_an = app.add_subcommand("analyze", "compute spectral metrics for a checkpoint");
    cmd_an->fallthrough();
    cmd_an->add_option("--model", analyze.model, "checkpoint path")->required();
    cmd_an->add_option("--format", analyze.format, "safetensors | rawbin");
    cmd_an->add_option("--grouping", analyze.grouping, "llama | gpt2 | rules-file path");
    cmd_an->add_option("--metric", analyze.metric,
                       "alpha_hill | alpha_hat | stable_rank | entropy | frobenius | spectral");
    cmd_an->add_option("--out", analyze.out_dir, "output directory for metrics.json/.csv");

    AllocateOpts alloc;
    auto * cmd_al = app.add_subcommand("allocate", "turn a metrics report into a compression plan");
    cmd_al->fallthrough();
    cmd_al->add_option("--metrics", alloc.metrics_file, "metrics.json from `analyze`")->required();
    cmd_al->add_option("--sparsity", alloc.sparsity, "target global sparsity S in (0,1)");
    cmd_al->add_option("--tau", alloc.tau,
                       "non-uniformity: s1 = 1-tau, s2 = 1+tau (0.2 is a solid default; "
                       "sweep {0.1, 0.2, 0.3, 0.4, 0.5} when tuning)");
    cmd_al->add_option("--tau-matrix", alloc.tau_matrix,
                       "within-block non-uniformity for mixed granularity (default: tau/2)");
    cmd_al->add_option("--s1", alloc.s1, "lower mapping endpoint");
    cmd_al->add_option("--s2", alloc.s2, "upper mapping endpoint");
    cmd_al->add_option("--min-sparsity", alloc.min_sparsity, "solve endpoints for this minimum layer sparsity");
    cmd_al->add_option("--granularity", alloc.granularity, "per_block | per_matrix | mixed");
    cmd_al->add_option("--metric", alloc.metric, "override the report's metric");
    cmd_al->add_option("--out", alloc.out, "plan file to write");
    cmd_al->add_option("--kind", alloc.kind, "sparsity | nm | bits");
    cmd_al->add_option("--m-group", alloc.m_group, "N:M group size M");
    cmd_al->add_option("--density", alloc.density, "N:M target average density (avg N / M)");
    cmd_al->add_option("--bit-options", alloc.bit_options, "allowed bit widths, comma separated");
    cmd_al->add_option("--avg-bits", alloc.avg_bits, "target parameter-weighted average bit width");
    cmd_al->add_option("--keep-budget", alloc.keep_budget, "total kept rank (ranks kind)");
    cmd_al->add_option("--strategy", alloc.strategy, "more_on_ht | less_on_ht (ranks kind)");

    PruneOpts prune;
    auto * cmd_pr = app.add_subcommand("prune", "apply a plan to a checkpoint");
    cmd_pr->fallthrough();
    cmd_pr->add_option("--model", prune.model, "checkpoint path")->required();
    cmd_pr->add_option("--format", prune.format, "safetensors | rawbin");
    cmd_pr->add_option("--plan", prune.plan, "sparsity or budget plan JSON")->required();
    cmd_pr->add_option("--out", prune.out, "output checkpoint path")->required();
    cmd_pr->add_option("--report", prune.report, "report file prefix (default: <out>.report)");

    auto * cmd_sy = app.add_subcommand("synth", "synthetic desk-scale experiments");
    cmd_sy->fallthrough();
    cmd_sy->require_subcommand(1);

    SynthCorrelationOpts corr;
    auto * cmd_sc = cmd_sy->add_subcommand("correlation", "alpha_hill vs stable_rank on Pareto ensembles");
    cmd_sc->fallthrough();
    cmd_sc->add_option("--alphas", corr.alphas, "density exponents, comma separated");
    cmd_sc->add_option("--n", corr.n, "eigenvalues per ensemble");
    cmd_sc->add_option("--seeds", corr.seeds, "ensembles per exponent");
    cmd_sc->add_option("--out", corr.out, "CSV output path");

    SynthLraOpts lra;
    auto * cmd_sl = cmd_sy->add_subcommand("lra", "compare rank-assignment strategies on a checkpoint");
    cmd_sl->fallthrough();
    cmd_sl->add_option("--model", lra.model, "checkpoint path")->required();
    cmd_sl->add_option("--format", lra.format, "safetensors | rawbin");
    cmd_sl->add_option("--grouping", lra.grouping, "llama | gpt2 | rules-file path");
    cmd_sl->add_option("--keep-budget", lra.keep_budget, "total kept rank across matrices")->required();
    cmd_sl->add_option("--tau", lra.tau, "non-uniformity of the rank mapping");
    cmd_sl->add_option("--out", lra.out, "CSV output path");

    try {
        app.parse(argc, argv);
        if (cmd_an->parsed()) {
            return cmd_analyze(analyze, global);
        }
        if (cmd_al->parsed()) {
            return cmd_allocate(alloc, global);
        }
        if (cmd_pr->parsed()) {
            return cmd_prune(prune, global);
        }
        if (cmd_sy->parsed()) {
            if (cmd_sc->parsed()) {
                return cmd_synth_correlation(corr, global);
            }
            if (cmd_sl->parsed()) {
                return cmd_synth_lra(lra, global);
            }
        }
        return 1;
    } catch (const CLI::ParseError & e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1; // usage errors exit 1, --help exits 0
    } catch (const Error & e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(Errc::data);
    }
}
