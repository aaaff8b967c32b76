#include "specprune/compression.hpp"

#include "specprune/metrics.hpp"

#include <json.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace specprune {

using ordered_json = nlohmann::ordered_json;

PruneResult magnitude_prune(std::span<const float> w, std::size_t rows, std::size_t cols, double s) {
    if (w.size() != rows * cols) {
        throw_data("buffer length does not match matrix shape");
    }
    if (s < 0.0 || s > 1.0) {
        throw_usage("sparsity must lie in [0, 1]");
    }
    const std::size_t d = w.size();
    // round half away from zero; s is nonnegative so this is floor(s*d + 0.5)
    std::size_t z = static_cast<std::size_t>(std::floor(s * static_cast<double>(d) + 0.5));
    z = std::min(z, d);

    PruneResult out;
    out.data.assign(w.begin(), w.end());
    out.mask.rows = rows;
    out.mask.cols = cols;
    out.mask.keep.assign(d, 1);

    if (z > 0) {
        std::vector<std::size_t> idx(d);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const float ma = std::fabs(w[a]);
            const float mb = std::fabs(w[b]);
            if (ma != mb) {
                return ma < mb;
            }
            return a < b; // earlier index pruned first
        });
        for (std::size_t i = 0; i < z; ++i) {
            out.data[idx[i]] = 0.0f;
            out.mask.keep[idx[i]] = 0;
        }
    }
    out.mask.kept_count = d - z;
    return out;
}

PruneResult nm_prune(std::span<const float> w, std::size_t rows, std::size_t cols, int n_keep, int m_group) {
    if (w.size() != rows * cols) {
        throw_data("buffer length does not match matrix shape");
    }
    if (m_group < 1 || n_keep < 1 || n_keep > m_group) {
        throw_usage("need 1 <= N <= M for N:M pruning");
    }
    if (cols % static_cast<std::size_t>(m_group) != 0) {
        throw_data("column count " + std::to_string(cols) + " not divisible by M = " +
                   std::to_string(m_group));
    }

    PruneResult out;
    out.data.assign(w.begin(), w.end());
    out.mask.rows = rows;
    out.mask.cols = cols;
    out.mask.keep.assign(w.size(), 0);

    const std::size_t m = static_cast<std::size_t>(m_group);
    std::vector<std::size_t> order(m);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t g = 0; g < cols; g += m) {
            const std::size_t base = r * cols + g;
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const float ma = std::fabs(w[base + a]);
                const float mb = std::fabs(w[base + b]);
                if (ma != mb) {
                    return ma > mb;
                }
                return a < b; // ties keep the lower column index
            });
            for (std::size_t j = 0; j < m; ++j) {
                if (j < static_cast<std::size_t>(n_keep)) {
                    out.mask.keep[base + order[j]] = 1;
                } else {
                    out.data[base + order[j]] = 0.0f;
                }
            }
        }
    }
    out.mask.kept_count = rows * (cols / m) * static_cast<std::size_t>(n_keep);
    return out;
}

std::vector<float> rtn_quantize(std::span<const float> w, int bits) {
    if (bits < 2 || bits > 8) {
        throw_usage("bit width must lie in [2, 8]");
    }
    float max_abs = 0.0f;
    for (float v : w) {
        max_abs = std::max(max_abs, std::fabs(v));
    }
    std::vector<float> out(w.begin(), w.end());
    if (max_abs == 0.0f) {
        return out; // nothing to scale
    }
    const float qmax = static_cast<float>((1 << (bits - 1)) - 1);
    const float scale = max_abs / qmax;
    for (float & v : out) {
        const float q = std::nearbyintf(v / scale); // round half to even
        v = std::clamp(q, -qmax, qmax) * scale;
    }
    return out;
}

LraResult lra_truncate(const Eigen::Ref<const Eigen::MatrixXd> & w, int r) {
    const int full = static_cast<int>(std::min(w.rows(), w.cols()));
    if (r < 1 || r > full) {
        throw_usage("kept rank " + std::to_string(r) + " outside [1, " + std::to_string(full) + "]");
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd & sv = svd.singularValues();

    LraResult out;
    out.approx = svd.matrixU().leftCols(r) * sv.head(r).asDiagonal() *
                 svd.matrixV().leftCols(r).transpose();

    double tail = 0.0;
    for (int i = r; i < full; ++i) {
        tail += sv[i] * sv[i];
    }
    out.reconstruction_error = std::sqrt(tail);

    // Eckart-Young cross-check: the tail norm must match the explicit
    // residual to 1e-5 relative, with an absolute floor for the zero-tail case.
    const double residual = (w - out.approx).norm();
    const double tol = 1e-5 * out.reconstruction_error + 1e-9 * sv.norm();
    if (std::abs(residual - out.reconstruction_error) > tol) {
        throw_data("truncated SVD residual mismatch: tail norm " +
                   std::to_string(out.reconstruction_error) + " vs explicit " + std::to_string(residual));
    }
    return out;
}

// ---------------------------------------------------------------------------
// plan application

namespace {

void require_matrix(const WeightStore & store, const std::string & name) {
    if (!store.contains(name)) {
        throw_data("plan references missing tensor '" + name + "'");
    }
    if (!store.at(name).is_matrix()) {
        throw_data("plan references non-2-D tensor '" + name + "'");
    }
}

double zero_fraction(const std::vector<float> & data) {
    std::size_t zeros = 0;
    for (float v : data) {
        if (v == 0.0f) {
            ++zeros;
        }
    }
    return static_cast<double>(zeros) / static_cast<double>(data.size());
}

double frobenius_diff(const std::vector<float> & a, const std::vector<float> & b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

CompressionReport finish_report(CompressionReport report, const WeightStore & out,
                                const std::vector<std::string> & covered) {
    std::size_t zeros = 0;
    std::size_t total = 0;
    for (const auto & name : covered) {
        const auto & data = out.at(name).data;
        total += data.size();
        for (float v : data) {
            if (v == 0.0f) {
                ++zeros;
            }
        }
    }
    report.global_achieved_sparsity =
        total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
    return report;
}

} // namespace

std::pair<WeightStore, CompressionReport> apply_plan(const WeightStore & store, const SparsityPlan & plan) {
    for (const auto & [name, s] : plan.per_matrix) {
        require_matrix(store, name);
        if (s < 0.0 || s > 1.0) {
            throw_data("plan sparsity for '" + name + "' outside [0, 1]");
        }
    }

    WeightStore out;
    CompressionReport report;
    report.kind = "sparsity";
    std::vector<std::string> covered;
    for (const auto & name : store.names()) {
        const TensorEntry & entry = store.at(name);
        bool in_plan = false;
        double target = 0.0;
        for (const auto & [pname, s] : plan.per_matrix) {
            if (pname == name) {
                in_plan = true;
                target = s;
                break;
            }
        }
        if (!in_plan) {
            out.add(name, entry);
            continue;
        }
        PruneResult pruned = magnitude_prune(entry.data, entry.rows(), entry.cols(), target);
        CompressionReport::Row row;
        row.name = name;
        row.d = entry.numel();
        row.target = target;
        row.achieved_sparsity = zero_fraction(pruned.data); // zero-count convention, as in the global figure
        row.reconstruction_error = frobenius_diff(entry.data, pruned.data);
        report.rows.push_back(std::move(row));

        TensorEntry new_entry;
        new_entry.shape = entry.shape;
        new_entry.dtype = entry.dtype;
        new_entry.data = std::move(pruned.data);
        out.add(name, std::move(new_entry));
        covered.push_back(name);
    }
    CompressionReport finished = finish_report(std::move(report), out, covered);
    return {std::move(out), std::move(finished)};
}

std::pair<WeightStore, CompressionReport> apply_plan(const WeightStore & store, const BudgetPlan & plan) {
    const int m_group = plan.kind == BudgetKind::nm
                            ? (plan.options.empty() ? 0 : *std::max_element(plan.options.begin(),
                                                                            plan.options.end()))
                            : 0;
    for (const auto & [name, value] : plan.per_layer) {
        require_matrix(store, name);
        const TensorEntry & entry = store.at(name);
        switch (plan.kind) {
            case BudgetKind::nm:
                if (value < 1 || value > m_group) {
                    throw_data("N value " + std::to_string(value) + " for '" + name + "' outside [1, M]");
                }
                if (entry.cols() % static_cast<std::size_t>(m_group) != 0) {
                    throw_data("tensor '" + name + "' column count not divisible by M = " +
                               std::to_string(m_group));
                }
                break;
            case BudgetKind::bits:
                if (value < 2 || value > 8) {
                    throw_data("bit width " + std::to_string(value) + " for '" + name +
                               "' outside [2, 8]");
                }
                break;
            case BudgetKind::ranks: {
                const int full = static_cast<int>(std::min(entry.rows(), entry.cols()));
                if (value < 1 || value > full) {
                    throw_data("kept rank " + std::to_string(value) + " for '" + name +
                               "' outside [1, " + std::to_string(full) + "]");
                }
                break;
            }
        }
    }

    WeightStore out;
    CompressionReport report;
    report.kind = budget_kind_name(plan.kind);
    std::vector<std::string> covered;
    for (const auto & name : store.names()) {
        const TensorEntry & entry = store.at(name);
        bool in_plan = false;
        int value = 0;
        for (const auto & [pname, v] : plan.per_layer) {
            if (pname == name) {
                in_plan = true;
                value = v;
                break;
            }
        }
        if (!in_plan) {
            out.add(name, entry);
            continue;
        }

        TensorEntry new_entry;
        new_entry.shape = entry.shape;
        new_entry.dtype = entry.dtype;

        CompressionReport::Row row;
        row.name = name;
        row.d = entry.numel();
        row.target = value;

        switch (plan.kind) {
            case BudgetKind::nm: {
                PruneResult pruned = nm_prune(entry.data, entry.rows(), entry.cols(), value, m_group);
                new_entry.data = std::move(pruned.data);
                break;
            }
            case BudgetKind::bits: {
                new_entry.data = rtn_quantize(entry.data, value);
                break;
            }
            case BudgetKind::ranks: {
                const LraResult lra = lra_truncate(to_matrix(entry), value);
                new_entry.data.resize(entry.numel());
                for (std::size_t r = 0; r < entry.rows(); ++r) {
                    for (std::size_t c = 0; c < entry.cols(); ++c) {
                        new_entry.data[r * entry.cols() + c] =
                            static_cast<float>(lra.approx(static_cast<Eigen::Index>(r),
                                                          static_cast<Eigen::Index>(c)));
                    }
                }
                break;
            }
        }

        row.achieved_sparsity = zero_fraction(new_entry.data);
        row.reconstruction_error = frobenius_diff(entry.data, new_entry.data);
        report.rows.push_back(std::move(row));
        out.add(name, std::move(new_entry));
        covered.push_back(name);
    }
    CompressionReport finished = finish_report(std::move(report), out, covered);
    return {std::move(out), std::move(finished)};
}

// ---------------------------------------------------------------------------
// report serialization

std::string compression_report_to_json(const CompressionReport & report) {
    ordered_json doc;
    doc["version"] = 1;
    doc["kind"] = report.kind;
    doc["global_achieved_sparsity"] = report.global_achieved_sparsity;
    doc["rows"] = ordered_json::array();
    for (const auto & row : report.rows) {
        ordered_json r;
        r["name"] = row.name;
        r["d"] = row.d;
        r["target"] = row.target;
        r["achieved_sparsity"] = row.achieved_sparsity;
        r["reconstruction_error"] = row.reconstruction_error;
        doc["rows"].push_back(std::move(r));
    }
    return doc.dump(2) + "\n";
}

std::string compression_report_to_csv(const CompressionReport & report) {
    std::string out = "name,d,target,achieved_sparsity,reconstruction_error\n";
    for (const auto & row : report.rows) {
        out += row.name;
        out += ',';
        out += std::to_string(row.d);
        out += ',';
        out += ordered_json(row.target).dump();
        out += ',';
        out += ordered_json(row.achieved_sparsity).dump();
        out += ',';
        out += ordered_json(row.reconstruction_error).dump();
        out += '\n';
    }
    return out;
}

} // namespace specprune
