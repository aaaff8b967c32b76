#pragma once

#include "specprune/spectral.hpp"
#include "specprune/tensorio.hpp"

#include <optional>
#include <string>
#include <vector>

namespace specprune {

enum class MetricName { alpha_hill, alpha_hat, stable_rank, entropy, frobenius, spectral };

bool metric_from_name(const std::string & name, MetricName & out);
const char * metric_name(MetricName metric);

/// Mapping direction: +1 means "larger value => worse trained => prune more"
/// as-is; -1 means the metric is negated before entering the allocation map.
double metric_sign(MetricName metric);

/// All scale/shape metrics for one weight matrix.
struct MatrixMetrics {
    std::string name;
    int block_index = -1;
    std::size_t param_count = 0; // rows * cols
    std::size_t rows = 0;
    std::size_t cols = 0;

    double alpha_hill = 0.0;
    double alpha_hat = 0.0;
    double stable_rank = 0.0;
    double entropy = 0.0;
    double frobenius_sq = 0.0;
    double spectral_sq = 0.0;
    PlFit fit;
};

double metric_value(const MatrixMetrics & m, MetricName metric);

/// Per-block quality: unweighted mean of the chosen metric over the block's
/// successfully fitted matrices, plus the total parameter count of all
/// members (fitted or not).
struct BlockQuality {
    int block_index = 0;
    double q = 0.0;
    std::size_t d = 0;
};

struct AnalysisFailure {
    std::string name;
    int block_index = -1;
    std::size_t param_count = 0;
    std::string message;
};

struct ModelAnalysis {
    std::vector<MatrixMetrics> matrices; // grouping order (blocks ascending, names sorted)
    std::vector<BlockQuality> blocks;
    std::vector<AnalysisFailure> failures;
};

/// View a row-major tensor as an Eigen matrix (f32 widened to f64).
Eigen::MatrixXd to_matrix(const TensorEntry & entry);

/// Alpha-hat: alpha * ln(lambda_max).
double alpha_hat(const PlFit & fit);

/// Stable rank: sum(lambda) / lambda_max == ||W||_F^2 / ||W||_2^2.
double stable_rank(const Esd & esd);

/// Spectral entropy, normalized by ln(rank); 0 for rank <= 1. The numerical
/// rank counts singular values above 1e-12 * sigma_max.
double entropy(const Esd & esd);

/// {frobenius_sq, spectral_sq} = {sum(lambda), lambda_max}.
std::pair<double, double> scale_norms(const Esd & esd);

/// Compute MatrixMetrics for every grouped matrix and the per-block mean of
/// the chosen metric. Matrices whose fit degenerates are reported in
/// `failures` and skipped in the mean; a block with no fitted member is an
/// error. Deterministic and independent of `threads`.
ModelAnalysis analyze_model(const WeightStore & store, const BlockGrouping & grouping,
                            MetricName metric, int threads = 1);

/// Recompute a block's mean for an arbitrary metric from the per-matrix rows.
std::vector<BlockQuality> block_qualities(const ModelAnalysis & analysis, MetricName metric);

// Metrics report files (schemas documented in the README).
std::string analysis_to_json(const ModelAnalysis & analysis, MetricName metric);
std::string analysis_to_csv(const ModelAnalysis & analysis);
ModelAnalysis analysis_from_json(const std::string & text, MetricName * metric_out = nullptr);

} // namespace specprune
