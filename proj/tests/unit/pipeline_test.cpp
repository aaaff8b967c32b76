#include "specprune/allocation.hpp"
#include "specprune/compression.hpp"
#include "specprune/metrics.hpp"
#include "specprune/tensorio.hpp"
#include "toy_model.hpp"

#include <doctest.h>

#include <cmath>

using namespace specprune;

TEST_SUITE("pipeline") {

TEST_CASE("analyze -> allocate -> prune -> re-analyze on the toy transformer") {
    testsupport::ToyModelConfig cfg;
    cfg.blocks = 2;
    cfg.dim = 32;
    cfg.hidden = 48;
    cfg.vocab = 40;
    const WeightStore store = testsupport::make_random_init(cfg);
    const BlockGrouping grouping = group_blocks(store, llama_grouping_preset());

    const ModelAnalysis analysis = analyze_model(store, grouping, MetricName::alpha_hill, 2);
    REQUIRE(analysis.failures.empty());
    REQUIRE(analysis.matrices.size() == grouping.grouped_count());

    const std::vector<BlockUnits> blocks = build_block_units(analysis, MetricName::alpha_hill);
    std::vector<double> q, d;
    for (const auto & b : blocks) {
        double total = 0.0;
        for (const auto & u : b.members) {
            total += u.d;
        }
        q.push_back(b.block_q);
        d.push_back(total);
    }
    const BlockAllocation alloc = allocate_sparsity_tau(q, d, 0.7, 0.2);
    const SparsityPlan plan = expand_to_units(alloc, blocks, 0.7);

    const auto [pruned, report] = apply_plan(store, plan);

    // achieved global sparsity within rounding slack of the target
    double total_d = 0.0;
    for (const auto & row : report.rows) {
        total_d += static_cast<double>(row.d);
    }
    const double slack = static_cast<double>(report.rows.size()) / total_d;
    CHECK(std::abs(report.global_achieved_sparsity - 0.7) <= slack);

    // per-matrix achieved sparsity is round(s*d)/d exactly
    for (const auto & row : report.rows) {
        const double z = std::floor(row.target * static_cast<double>(row.d) + 0.5);
        CHECK(row.achieved_sparsity ==
              doctest::Approx(z / static_cast<double>(row.d)).epsilon(1e-12));
    }

    // post-prune spectra still fit
    const ModelAnalysis after = analyze_model(pruned, grouping, MetricName::alpha_hill, 2);
    CHECK(after.failures.empty());
    for (const auto & m : after.matrices) {
        CHECK(std::isfinite(m.alpha_hill));
    }
}

TEST_CASE("plan files survive the save/load cycle through checkpoints") {
    testsupport::ToyModelConfig cfg;
    cfg.blocks = 2;
    cfg.dim = 16;
    cfg.hidden = 24;
    cfg.vocab = 20;
    const WeightStore store = testsupport::make_random_init(cfg);

    const auto dir = std::filesystem::temp_directory_path() / "specprune_pipeline";
    std::filesystem::create_directories(dir);
    const auto ckpt = dir / "toy.safetensors";
    save_checkpoint(store, ckpt, Format::safetensors);
    const WeightStore loaded = load_checkpoint(ckpt, Format::safetensors);

    for (const auto & name : store.names()) {
        CHECK(loaded.at(name).data == store.at(name).data);
    }

    const BlockGrouping grouping = group_blocks(loaded, llama_grouping_preset());
    const ModelAnalysis analysis = analyze_model(loaded, grouping, MetricName::alpha_hill);
    const std::vector<BlockUnits> blocks = build_block_units(analysis, MetricName::alpha_hill);
    const SparsityPlan plan = allocate_mixed(blocks, 0.5, 0.2, 0.1);

    const SparsityPlan reparsed = sparsity_plan_from_json(sparsity_plan_to_json(plan));
    const auto [a, ra] = apply_plan(loaded, plan);
    const auto [b, rb] = apply_plan(loaded, reparsed);
    for (const auto & name : a.names()) {
        CHECK(a.at(name).data == b.at(name).data);
    }
}

} // TEST_SUITE
