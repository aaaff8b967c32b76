#pragma once

#include "specprune/error.hpp"

#include <Eigen/Core>

#include <string>
#include <vector>

namespace specprune {

/// Empirical spectral density of W^T W, realized as the ascending eigenvalue
/// list. Eigenvalues are the squared singular values of W, so the list length
/// is min(rows, cols).
struct Esd {
    std::vector<double> eigenvalues; // ascending, nonnegative

    std::size_t size() const { return eigenvalues.size(); }
    double lambda_max() const { return eigenvalues.back(); }
};

/// Power-law fit diagnostics. Indexing follows the ascending 1-based
/// convention of the Hill estimator: with eigenvalues lambda_1 <= ... <=
/// lambda_n, the tail is the top k values and lambda_{n-k} is the reference.
struct PlFit {
    double alpha = 0.0;      // PL exponent, > 1 for a non-degenerate tail
    int k = 0;               // tail sample count
    double lambda_min = 0.0; // lower fit threshold
    double lambda_max = 0.0;
    bool fallback_used = false; // Fix-finger k was degenerate, k = n/2 used instead
};

/// Squared singular values of W, ascending. Computed from an SVD of W itself,
/// never from W^T W, to avoid squaring the condition number.
Esd compute_esd(const Eigen::Ref<const Eigen::MatrixXd> & w, const std::string & name = {});

/// Fix-finger threshold selection: lambda_min is the center of the most
/// populated bin of the log-eigenvalue histogram, k the number of eigenvalues
/// above it, clamped to [2, n-1].
///
/// Histogram rule: B = max(10, floor(sqrt(m))) equal-width bins over
/// [ln lambda_min_pos, ln lambda_max], where the m binned eigenvalues are
/// those above 1e-12 * lambda_max; ties broken toward the lowest bin.
std::pair<double, int> fix_finger_threshold(const Esd & esd);

/// Hill estimator: 1 + k / sum_{i=1..k} ln(lambda_{n-i+1} / lambda_{n-k}),
/// with eigenvalues ascending and 1-based indexing.
double hill_alpha(const Esd & esd, int k);

/// Fix-finger + Hill composition with the n/2 fallback.
PlFit pl_alpha_hill(const Esd & esd);

} // namespace specprune
