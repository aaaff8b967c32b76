#include "specprune/spectral.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace specprune {

namespace {

constexpr double kZeroDropRatio = 1e-12; // eigenvalues <= ratio * lambda_max are noise

} // namespace

Esd compute_esd(const Eigen::Ref<const Eigen::MatrixXd> & w, const std::string & name) {
    if (w.rows() == 0 || w.cols() == 0) {
        throw_data("cannot compute ESD of an empty matrix" + (name.empty() ? "" : " ('" + name + "')"));
    }
    if (!w.allFinite()) {
        throw_data("non-finite entry in matrix" + (name.empty() ? "" : " '" + name + "'"));
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(w);
    const Eigen::VectorXd & sv = svd.singularValues(); // descending
    Esd esd;
    esd.eigenvalues.resize(static_cast<std::size_t>(sv.size()));
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        esd.eigenvalues[static_cast<std::size_t>(sv.size() - 1 - i)] = sv[i] * sv[i];
    }
    return esd;
}

std::pair<double, int> fix_finger_threshold(const Esd & esd) {
    const auto & ev = esd.eigenvalues;
    const int n = static_cast<int>(ev.size());
    if (n < 8) {
        throw_data("spectrum too short for Fix-finger threshold selection (n = " + std::to_string(n) + ")");
    }
    const double lam_max = ev.back();
    if (!(lam_max > 0.0)) {
        throw_data("degenerate spectrum: all eigenvalues are zero");
    }
    const double cutoff = kZeroDropRatio * lam_max;

    // binned set: eigenvalues above the noise cutoff
    const auto first_kept = std::upper_bound(ev.begin(), ev.end(), cutoff);
    const std::size_t m = static_cast<std::size_t>(ev.end() - first_kept);
    const double lam_min_pos = *first_kept;
    if (lam_min_pos == lam_max) {
        throw_data("degenerate spectrum: fewer than two distinct positive eigenvalues");
    }

    const int bins = std::max(10, static_cast<int>(std::floor(std::sqrt(static_cast<double>(m)))));
    const double log_lo = std::log(lam_min_pos);
    const double log_hi = std::log(lam_max);
    const double width = (log_hi - log_lo) / bins;

    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (auto it = first_kept; it != ev.end(); ++it) {
        int b = static_cast<int>((std::log(*it) - log_lo) / width);
        b = std::clamp(b, 0, bins - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    int peak = 0;
    for (int b = 1; b < bins; ++b) {
        if (counts[static_cast<std::size_t>(b)] > counts[static_cast<std::size_t>(peak)]) {
            peak = b; // strict >: ties resolve to the lowest bin
        }
    }
    const double lambda_min = std::exp(log_lo + (peak + 0.5) * width);

    int k = static_cast<int>(ev.end() - std::upper_bound(ev.begin(), ev.end(), lambda_min));
    k = std::clamp(k, 2, n - 1);
    return {lambda_min, k};
}

double hill_alpha(const Esd & esd, int k) {
    const auto & ev = esd.eigenvalues;
    const int n = static_cast<int>(ev.size());
    if (k < 1 || k > n - 1) {
        throw_data("Hill tail count k = " + std::to_string(k) + " outside [1, n-1] for n = " +
                   std::to_string(n));
    }
    const double ref = ev[static_cast<std::size_t>(n - k - 1)]; // lambda_{n-k}, 1-based ascending
    if (!(ref > 0.0)) {
        throw_data("zero reference eigenvalue lambda_{n-k} in Hill estimator (k = " + std::to_string(k) + ")");
    }
    double sum = 0.0;
    for (int i = 1; i <= k; ++i) {
        sum += std::log(ev[static_cast<std::size_t>(n - i)] / ref);
    }
    if (!(sum > 0.0)) {
        throw_data("degenerate tail: top-" + std::to_string(k) + " eigenvalues all equal the reference");
    }
    return 1.0 + static_cast<double>(k) / sum;
}

PlFit pl_alpha_hill(const Esd & esd) {
    const auto [lambda_min, k] = fix_finger_threshold(esd);
    PlFit fit;
    fit.k = k;
    fit.lambda_min = lambda_min;
    fit.lambda_max = esd.lambda_max();
    try {
        fit.alpha = hill_alpha(esd, k);
        return fit;
    } catch (const Error &) {
        const int half = static_cast<int>(esd.size()) / 2;
        if (half == k || half < 1 || half > static_cast<int>(esd.size()) - 1) {
            throw;
        }
        fit.alpha = hill_alpha(esd, half); // rethrows if n/2 is degenerate as well
        fit.k = half;
        fit.lambda_min = esd.eigenvalues[esd.size() - static_cast<std::size_t>(half) - 1];
        fit.fallback_used = true;
        return fit;
    }
}

} // namespace specprune
