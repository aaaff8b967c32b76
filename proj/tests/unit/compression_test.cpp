#include "specprune/compression.hpp"

#include "specprune/metrics.hpp"
#include "specprune/rng.hpp"

#include <doctest.h>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace specprune;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
    Xoshiro256ss rng(seed);
    std::vector<float> out(n);
    for (auto & v : out) {
        v = static_cast<float>(rng.normal());
    }
    return out;
}

// Full-sort brute-force oracle: zero the z smallest |w| with index tie-break.
std::vector<float> oracle_magnitude_prune(const std::vector<float> & w, double s) {
    const std::size_t d = w.size();
    const auto z = static_cast<std::size_t>(std::floor(s * static_cast<double>(d) + 0.5));
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(w[a]) < std::fabs(w[b]);
    });
    std::vector<float> out = w;
    for (std::size_t i = 0; i < std::min(z, d); ++i) {
        out[idx[i]] = 0.0f;
    }
    return out;
}

} // namespace

TEST_SUITE("compression") {

TEST_CASE("documented magnitude-pruning example") {
    const std::vector<float> w = {1, -2, 3, -4};
    const auto pruned = magnitude_prune(w, 2, 2, 0.5);
    CHECK(pruned.data == std::vector<float>{0, 0, 3, -4});
    CHECK(pruned.mask.kept_count == 2);
}

TEST_CASE("zero sparsity is the identity, full sparsity empties the matrix") {
    const auto w = random_floats(24, 3);
    const auto zero = magnitude_prune(w, 4, 6, 0.0);
    CHECK(zero.data == w);
    CHECK(zero.mask.kept_count == 24);
    const auto full = magnitude_prune(w, 4, 6, 1.0);
    CHECK(full.mask.kept_count == 0);
    for (float v : full.data) {
        CHECK(v == 0.0f);
    }
}

TEST_CASE("magnitude pruning matches the full-sort oracle on random matrices") {
    Xoshiro256ss rng(17);
    for (int iter = 0; iter < 300; ++iter) {
        const auto w = random_floats(64, 1000 + static_cast<std::uint64_t>(iter));
        const double s = rng.uniform(0.0, 1.0);
        const auto got = magnitude_prune(w, 8, 8, s);
        CHECK(got.data == oracle_magnitude_prune(w, s));
    }
}

TEST_CASE("masks are nested across increasing sparsity") {
    const auto w = random_floats(64, 5);
    PruneMask prev = magnitude_prune(w, 8, 8, 0.1).mask;
    for (double s : {0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
        const PruneMask cur = magnitude_prune(w, 8, 8, s).mask;
        for (std::size_t i = 0; i < cur.keep.size(); ++i) {
            if (prev.keep[i] == 0) {
                CHECK(cur.keep[i] == 0); // zero set only grows
            }
        }
        prev = cur;
    }
}

TEST_CASE("pruning is scale equivariant with an identical mask") {
    const auto w = random_floats(48, 9);
    std::vector<float> scaled = w;
    for (float & v : scaled) {
        v *= 4.0f; // exact scaling
    }
    const auto base = magnitude_prune(w, 6, 8, 0.4);
    const auto big = magnitude_prune(scaled, 6, 8, 0.4);
    CHECK(base.mask.keep == big.mask.keep);
    for (std::size_t i = 0; i < base.data.size(); ++i) {
        CHECK(big.data[i] == 4.0f * base.data[i]);
    }
}

TEST_CASE("documented nm example and the identity case") {
    const std::vector<float> row = {1, -5, 2, 3};
    const auto pruned = nm_prune(row, 1, 4, 2, 4);
    CHECK(pruned.data == std::vector<float>{0, -5, 0, 3});

    const auto id = nm_prune(row, 1, 4, 4, 4);
    CHECK(id.data == row);

    CHECK_THROWS_WITH_AS(nm_prune(row, 1, 4, 2, 3), doctest::Contains("divisible"), Error);
}

TEST_CASE("nm pruning matches per-group brute force and keeps exactly N per group") {
    Xoshiro256ss rng(23);
    for (int iter = 0; iter < 100; ++iter) {
        const std::size_t rows = 1 + rng.below(6);
        const std::size_t cols = 8 * (1 + rng.below(3));
        const auto w = random_floats(rows * cols, 2000 + static_cast<std::uint64_t>(iter));
        const int n_keep = 1 + static_cast<int>(rng.below(8));
        const auto got = nm_prune(w, rows, cols, n_keep, 8);

        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t g = 0; g < cols; g += 8) {
                const std::size_t base = r * cols + g;
                // brute force: the kept set is the N largest |w|, ties to lower index
                std::vector<std::size_t> order(8);
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    return std::fabs(w[base + a]) > std::fabs(w[base + b]);
                });
                int nonzero = 0;
                for (std::size_t j = 0; j < 8; ++j) {
                    const bool kept = got.mask.keep[base + j] != 0;
                    nonzero += kept ? 1 : 0;
                    const bool should_keep =
                        std::find(order.begin(), order.begin() + n_keep, j) != order.begin() + n_keep;
                    CHECK(kept == should_keep);
                }
                CHECK(nonzero == n_keep);
            }
        }
    }
}

TEST_CASE("rtn quantization: grid fixpoints, error monotonicity, and the half-even case") {
    // values already on the 3-bit grid are unchanged: max = 1.5 gives the
    // exact scale 0.5, and every entry is an integer multiple of it
    const std::vector<float> on_grid = {0.5f, -1.0f, 1.5f, -0.5f, 0.0f};
    CHECK(rtn_quantize(on_grid, 3) == on_grid);

    // round-half-to-even documented case: scale 1.0, 0.5 rounds to 0
    const std::vector<float> half = {0.5f, -1.0f};
    CHECK(rtn_quantize(half, 2) == std::vector<float>{0.0f, -1.0f});

    // all-zero input returned unchanged
    const std::vector<float> zeros(6, 0.0f);
    CHECK(rtn_quantize(zeros, 4) == zeros);

    // reconstruction error shrinks (weakly) as bits grow
    const auto w = random_floats(256, 11);
    double prev_err = std::numeric_limits<double>::infinity();
    for (int bits = 2; bits <= 8; ++bits) {
        const auto q = rtn_quantize(w, bits);
        double err = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            err += (w[i] - q[i]) * (w[i] - q[i]);
        }
        CHECK(err <= prev_err + 1e-12);
        prev_err = err;
    }
}

TEST_CASE("lra truncation: full rank is exact, diagonal case is analytic") {
    Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(3, 3);
    diag(0, 0) = 3.0;
    diag(1, 1) = 2.0;
    diag(2, 2) = 1.0;
    const LraResult r2 = lra_truncate(diag, 2);
    CHECK(r2.reconstruction_error == doctest::Approx(1.0).epsilon(1e-9));

    const LraResult full = lra_truncate(diag, 3);
    CHECK(full.reconstruction_error <= 1e-9);
    CHECK((full.approx - diag).norm() <= 1e-9);

    CHECK_THROWS_AS(lra_truncate(diag, 0), Error);
    CHECK_THROWS_AS(lra_truncate(diag, 4), Error);
}

TEST_CASE("lra reconstruction error matches the oracle tail norm") {
    Xoshiro256ss rng(41);
    Eigen::MatrixXd w(10, 6);
    for (int r = 0; r < 10; ++r) {
        for (int c = 0; c < 6; ++c) {
            w(r, c) = rng.normal();
        }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w);
    for (int r = 1; r <= 6; ++r) {
        const LraResult res = lra_truncate(w, r);
        double tail = 0.0;
        for (int i = r; i < 6; ++i) {
            tail += svd.singularValues()[i] * svd.singularValues()[i];
        }
        CHECK(res.reconstruction_error == doctest::Approx(std::sqrt(tail)).epsilon(1e-9));
        CHECK((w - res.approx).norm() ==
              doctest::Approx(res.reconstruction_error).epsilon(1e-5).scale(1.0));
    }
}

TEST_CASE("apply_plan: all-zero plan is bit-identical, uniform plan meets the target") {
    WeightStore store;
    TensorEntry e;
    e.shape = {8, 8};
    e.data = random_floats(64, 77);
    store.add("model.layers.0.self_attn.q_proj.weight", e);
    TensorEntry e2;
    e2.shape = {8, 8};
    e2.data = random_floats(64, 78);
    store.add("model.layers.1.self_attn.q_proj.weight", e2);

    SparsityPlan zero_plan;
    zero_plan.per_matrix = {{"model.layers.0.self_attn.q_proj.weight", 0.0},
                            {"model.layers.1.self_attn.q_proj.weight", 0.0}};
    zero_plan.target_global = 0.5; // irrelevant for application
    const auto [unchanged, zero_report] = apply_plan(store, zero_plan);
    for (const auto & name : store.names()) {
        CHECK(unchanged.at(name).data == store.at(name).data);
    }
    CHECK(zero_report.global_achieved_sparsity == 0.0);

    SparsityPlan half;
    half.per_matrix = {{"model.layers.0.self_attn.q_proj.weight", 0.5},
                       {"model.layers.1.self_attn.q_proj.weight", 0.5}};
    half.target_global = 0.5;
    const auto [pruned, report] = apply_plan(store, half);
    CHECK(report.global_achieved_sparsity == doctest::Approx(0.5).epsilon(2.0 / 128.0));
    for (const auto & row : report.rows) {
        CHECK(row.achieved_sparsity == doctest::Approx(0.5).epsilon(1.0 / 64.0));
    }
}

TEST_CASE("apply_plan is all-or-nothing on missing tensors and idempotent on re-application") {
    WeightStore store;
    TensorEntry e;
    e.shape = {8, 8};
    e.data = random_floats(64, 79);
    store.add("w", e);

    SparsityPlan bad;
    bad.per_matrix = {{"w", 0.5}, {"missing", 0.5}};
    CHECK_THROWS_WITH_AS(apply_plan(store, bad), doctest::Contains("missing"), Error);

    SparsityPlan plan;
    plan.per_matrix = {{"w", 0.4}};
    const auto [once, r1] = apply_plan(store, plan);
    const auto [twice, r2] = apply_plan(once, plan);
    CHECK(once.at("w").data == twice.at("w").data);
}

TEST_CASE("apply_plan handles budget plans per kind") {
    WeightStore store;
    TensorEntry e;
    e.shape = {4, 8};
    e.data = random_floats(32, 80);
    store.add("a", e);
    TensorEntry e2;
    e2.shape = {4, 8};
    e2.data = random_floats(32, 81);
    store.add("b", e2);

    BudgetPlan nm;
    nm.kind = BudgetKind::nm;
    nm.options = {1, 2, 3, 4, 5, 6, 7, 8};
    nm.per_layer = {{"a", 2}, {"b", 6}};
    const auto [nm_out, nm_report] = apply_plan(store, nm);
    CHECK(nm_report.rows[0].achieved_sparsity == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(nm_report.rows[1].achieved_sparsity == doctest::Approx(0.25).epsilon(1e-12));

    BudgetPlan bits;
    bits.kind = BudgetKind::bits;
    bits.options = {2, 4, 8};
    bits.per_layer = {{"a", 2}, {"b", 8}};
    const auto [q_out, q_report] = apply_plan(store, bits);
    CHECK(q_report.rows[0].reconstruction_error > q_report.rows[1].reconstruction_error);

    BudgetPlan ranks;
    ranks.kind = BudgetKind::ranks;
    ranks.options = {1, 2, 3, 4};
    ranks.per_layer = {{"a", 4}, {"b", 1}};
    const auto [r_out, r_report] = apply_plan(store, ranks);
    CHECK(r_report.rows[0].reconstruction_error <= 1e-5);
    CHECK(r_report.rows[1].reconstruction_error > 0.0);

    // post-compression re-analysis stays finite (alpha reportable)
    WeightStore named;
    TensorEntry big;
    big.shape = {24, 24};
    big.data = random_floats(24 * 24, 90);
    named.add("model.layers.0.self_attn.q_proj.weight", big);
    SparsityPlan sp;
    sp.per_matrix = {{"model.layers.0.self_attn.q_proj.weight", 0.7}};
    const auto [pruned, rep] = apply_plan(named, sp);
    const BlockGrouping grouping = group_blocks(pruned, llama_grouping_preset());
    const ModelAnalysis analysis = analyze_model(pruned, grouping, MetricName::alpha_hill);
    REQUIRE(analysis.failures.empty());
    CHECK(std::isfinite(analysis.matrices[0].alpha_hill));
}

TEST_CASE("report serialization carries the global figure and per-matrix rows") {
    CompressionReport report;
    report.kind = "sparsity";
    report.global_achieved_sparsity = 0.5;
    report.rows.push_back({"w", 64, 0.5, 0.5, 1.25});
    const std::string json = compression_report_to_json(report);
    CHECK(json.find("\"global_achieved_sparsity\": 0.5") != std::string::npos);
    const std::string csv = compression_report_to_csv(report);
    CHECK(csv.rfind("name,d,target,achieved_sparsity,reconstruction_error\n", 0) == 0);
    CHECK(csv.find("w,64,0.5,0.5,1.25") != std::string::npos);
}

} // TEST_SUITE
