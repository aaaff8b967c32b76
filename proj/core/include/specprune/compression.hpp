#pragma once

#include "specprune/allocation.hpp"
#include "specprune/tensorio.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace specprune {

/// Keep/drop decision per element of a matrix, row-major.
struct PruneMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> keep; // 1 = kept, 0 = zeroed
    std::size_t kept_count = 0;

    double achieved_sparsity() const {
        return 1.0 - static_cast<double>(kept_count) / static_cast<double>(keep.size());
    }
};

struct PruneResult {
    std::vector<float> data; // kept entries bit-identical to the input
    PruneMask mask;
};

/// Zero the round(s * d) smallest-magnitude entries (round half away from
/// zero); ties broken by row-major index, earlier index pruned first.
PruneResult magnitude_prune(std::span<const float> w, std::size_t rows, std::size_t cols, double s);

/// Keep the N largest-magnitude entries in every group of M consecutive
/// elements along each row; ties keep the lower column index. Column count
/// must be divisible by M.
PruneResult nm_prune(std::span<const float> w, std::size_t rows, std::size_t cols, int n_keep, int m_group);

/// Symmetric per-matrix round-to-nearest quantization (round half to even),
/// returned dequantized. All-zero input is returned unchanged.
std::vector<float> rtn_quantize(std::span<const float> w, int bits);

struct LraResult {
    Eigen::MatrixXd approx;
    double reconstruction_error = 0.0; // ||W - W_r||_F == sqrt(sum of discarded sigma^2)
};

/// Rank-r truncated SVD. The returned error is the tail singular-value norm;
/// it is cross-checked internally against the explicit Frobenius difference.
LraResult lra_truncate(const Eigen::Ref<const Eigen::MatrixXd> & w, int r);

struct CompressionReport {
    struct Row {
        std::string name;
        std::size_t d = 0;
        double target = 0.0;            // requested sparsity / bits / kept rank
        double achieved_sparsity = 0.0; // zero fraction after the transform
        double reconstruction_error = 0.0;
    };
    std::vector<Row> rows;
    double global_achieved_sparsity = 0.0; // over covered matrices
    std::string kind;                      // "sparsity" / "nm" / "bits" / "ranks"
};

std::string compression_report_to_json(const CompressionReport & report);
std::string compression_report_to_csv(const CompressionReport & report);

/// Apply a plan to every covered tensor; uncovered tensors are copied
/// untouched. Validation happens before any work, so either the full new
/// store is produced or nothing is.
std::pair<WeightStore, CompressionReport> apply_plan(const WeightStore & store, const SparsityPlan & plan);
std::pair<WeightStore, CompressionReport> apply_plan(const WeightStore & store, const BudgetPlan & plan);

} // namespace specprune
