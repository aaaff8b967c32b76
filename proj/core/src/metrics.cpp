#include "specprune/metrics.hpp"

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <map>
#include <thread>

namespace specprune {

bool metric_from_name(const std::string & name, MetricName & out) {
    if (name == "alpha_hill") { out = MetricName::alpha_hill; return true; }
    if (name == "alpha_hat") { out = MetricName::alpha_hat; return true; }
    if (name == "stable_rank") { out = MetricName::stable_rank; return true; }
    if (name == "entropy") { out = MetricName::entropy; return true; }
    if (name == "frobenius") { out = MetricName::frobenius; return true; }
    if (name == "spectral") { out = MetricName::spectral; return true; }
    return false;
}

const char * metric_name(MetricName metric) {
    switch (metric) {
        case MetricName::alpha_hill: return "alpha_hill";
        case MetricName::alpha_hat: return "alpha_hat";
        case MetricName::stable_rank: return "stable_rank";
        case MetricName::entropy: return "entropy";
        case MetricName::frobenius: return "frobenius";
        case MetricName::spectral: return "spectral";
    }
    return "?";
}

double metric_sign(MetricName metric) {
    switch (metric) {
        case MetricName::alpha_hill:
        case MetricName::alpha_hat:
            return 1.0;
        case MetricName::stable_rank:
        case MetricName::entropy:
        case MetricName::frobenius:
        case MetricName::spectral:
            return -1.0;
    }
    return 1.0;
}

double metric_value(const MatrixMetrics & m, MetricName metric) {
    switch (metric) {
        case MetricName::alpha_hill: return m.alpha_hill;
        case MetricName::alpha_hat: return m.alpha_hat;
        case MetricName::stable_rank: return m.stable_rank;
        case MetricName::entropy: return m.entropy;
        case MetricName::frobenius: return m.frobenius_sq;
        case MetricName::spectral: return m.spectral_sq;
    }
    return 0.0;
}

Eigen::MatrixXd to_matrix(const TensorEntry & entry) {
    if (!entry.is_matrix()) {
        throw_data("tensor is not 2-D");
    }
    using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajorF> map(entry.data.data(), static_cast<Eigen::Index>(entry.rows()),
                                    static_cast<Eigen::Index>(entry.cols()));
    return map.cast<double>();
}

double alpha_hat(const PlFit & fit) {
    if (!(fit.lambda_max > 0.0)) {
        throw_data("alpha_hat requires lambda_max > 0");
    }
    return fit.alpha * std::log(fit.lambda_max);
}

double stable_rank(const Esd & esd) {
    const double lam_max = esd.lambda_max();
    if (!(lam_max > 0.0)) {
        throw_data("stable rank of an all-zero spectrum");
    }
    double sum = 0.0;
    for (double ev : esd.eigenvalues) {
        sum += ev;
    }
    return sum / lam_max;
}

double entropy(const Esd & esd) {
    const double lam_max = esd.lambda_max();
    if (!(lam_max > 0.0)) {
        throw_data("entropy of an all-zero spectrum");
    }
    // numerical rank: sigma_i > 1e-12 * sigma_max <=> lambda_i > 1e-24 * lambda_max
    const double cutoff = 1e-24 * lam_max;
    double total = 0.0;
    std::size_t rank = 0;
    for (double ev : esd.eigenvalues) {
        if (ev > cutoff) {
            total += ev;
            ++rank;
        }
    }
    if (rank <= 1) {
        return 0.0; // maximally concentrated spectrum by convention
    }
    double h = 0.0;
    for (double ev : esd.eigenvalues) {
        if (ev > cutoff) {
            const double p = ev / total;
            h -= p * std::log(p);
        }
    }
    return h / std::log(static_cast<double>(rank));
}

std::pair<double, double> scale_norms(const Esd & esd) {
    double sum = 0.0;
    for (double ev : esd.eigenvalues) {
        sum += ev;
    }
    return {sum, esd.lambda_max()};
}

namespace {

MatrixMetrics compute_matrix_metrics(const std::string & name, int block_index,
                                     const TensorEntry & entry) {
    MatrixMetrics m;
    m.name = name;
    m.block_index = block_index;
    m.param_count = entry.numel();
    m.rows = entry.rows();
    m.cols = entry.cols();

    const Eigen::MatrixXd w = to_matrix(entry);
    const Esd esd = compute_esd(w, name);
    m.fit = pl_alpha_hill(esd);
    m.alpha_hill = m.fit.alpha;
    m.alpha_hat = alpha_hat(m.fit);
    m.stable_rank = stable_rank(esd);
    m.entropy = entropy(esd);
    std::tie(m.frobenius_sq, m.spectral_sq) = scale_norms(esd);
    return m;
}

} // namespace

ModelAnalysis analyze_model(const WeightStore & store, const BlockGrouping & grouping,
                            MetricName metric, int threads) {
    struct Task {
        std::string name;
        int block_index;
    };
    std::vector<Task> tasks;
    for (const auto & block : grouping.blocks) {
        for (const auto & name : block.matrix_names) {
            if (!store.contains(name)) {
                throw_data("grouping references missing tensor '" + name + "'");
            }
            tasks.push_back({name, block.index});
        }
    }

    struct Slot {
        std::optional<MatrixMetrics> ok;
        std::optional<AnalysisFailure> failed;
    };
    std::vector<Slot> slots(tasks.size());

    const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(tasks.size())));
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= tasks.size()) {
                return;
            }
            const auto & task = tasks[i];
            try {
                slots[i].ok = compute_matrix_metrics(task.name, task.block_index, store.at(task.name));
            } catch (const std::exception & e) {
                slots[i].failed = AnalysisFailure{task.name, task.block_index,
                                                  store.at(task.name).numel(), e.what()};
            }
        }
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto & th : pool) {
            th.join();
        }
    }

    ModelAnalysis analysis;
    for (auto & slot : slots) {
        if (slot.ok) {
            analysis.matrices.push_back(std::move(*slot.ok));
        } else {
            analysis.failures.push_back(std::move(*slot.failed));
        }
    }

    for (const auto & block : grouping.blocks) {
        BlockQuality bq;
        bq.block_index = block.index;
        for (const auto & name : block.matrix_names) {
            bq.d += store.at(name).numel();
        }
        double sum = 0.0;
        std::size_t fitted = 0;
        for (const auto & m : analysis.matrices) {
            if (m.block_index == block.index) {
                sum += metric_value(m, metric);
                ++fitted;
            }
        }
        if (fitted == 0) {
            throw_data("block " + std::to_string(block.index) + " has no successfully fitted matrix");
        }
        bq.q = sum / static_cast<double>(fitted);
        analysis.blocks.push_back(bq);
    }
    return analysis;
}

std::vector<BlockQuality> block_qualities(const ModelAnalysis & analysis, MetricName metric) {
    struct Acc {
        double sum = 0.0;
        std::size_t fitted = 0;
        std::size_t d = 0;
    };
    std::map<int, Acc> by_block;
    for (const auto & m : analysis.matrices) {
        auto & acc = by_block[m.block_index];
        acc.sum += metric_value(m, metric);
        ++acc.fitted;
        acc.d += m.param_count;
    }
    for (const auto & f : analysis.failures) {
        by_block[f.block_index].d += f.param_count;
    }
    std::vector<BlockQuality> out;
    for (const auto & [index, acc] : by_block) {
        if (acc.fitted == 0) {
            throw_data("block " + std::to_string(index) + " has no successfully fitted matrix");
        }
        out.push_back(BlockQuality{index, acc.sum / static_cast<double>(acc.fitted), acc.d});
    }
    return out;
}

// ---------------------------------------------------------------------------
// report files

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json row_to_json(const MatrixMetrics & m) {
    ordered_json row;
    row["name"] = m.name;
    row["block"] = m.block_index;
    row["d"] = m.param_count;
    row["shape"] = {m.rows, m.cols};
    row["alpha_hill"] = m.alpha_hill;
    row["alpha_hat"] = m.alpha_hat;
    row["stable_rank"] = m.stable_rank;
    row["entropy"] = m.entropy;
    row["frobenius_sq"] = m.frobenius_sq;
    row["spectral_sq"] = m.spectral_sq;
    row["k"] = m.fit.k;
    row["lambda_min"] = m.fit.lambda_min;
    row["lambda_max"] = m.fit.lambda_max;
    row["fallback_used"] = m.fit.fallback_used;
    return row;
}

} // namespace

std::string analysis_to_json(const ModelAnalysis & analysis, MetricName metric) {
    ordered_json doc;
    doc["version"] = 1;
    doc["metric"] = metric_name(metric);
    doc["rows"] = ordered_json::array();
    for (const auto & m : analysis.matrices) {
        doc["rows"].push_back(row_to_json(m));
    }
    doc["failures"] = ordered_json::array();
    for (const auto & f : analysis.failures) {
        ordered_json item;
        item["name"] = f.name;
        item["block"] = f.block_index;
        item["d"] = f.param_count;
        item["error"] = f.message;
        doc["failures"].push_back(std::move(item));
    }
    doc["blocks"] = ordered_json::array();
    for (const auto & b : analysis.blocks) {
        ordered_json item;
        item["block"] = b.block_index;
        item["q"] = b.q;
        item["d"] = b.d;
        doc["blocks"].push_back(std::move(item));
    }
    return doc.dump(2) + "\n";
}

std::string analysis_to_csv(const ModelAnalysis & analysis) {
    std::string out = "name,block,d,alpha_hill,alpha_hat,stable_rank,entropy,frobenius_sq,"
                      "spectral_sq,k,lambda_min,lambda_max,fallback_used\n";
    for (const auto & m : analysis.matrices) {
        out += m.name;
        out += ',' + std::to_string(m.block_index);
        out += ',' + std::to_string(m.param_count);
        for (double v : {m.alpha_hill, m.alpha_hat, m.stable_rank, m.entropy, m.frobenius_sq,
                         m.spectral_sq}) {
            out += ',' + ordered_json(v).dump();
        }
        out += ',' + std::to_string(m.fit.k);
        out += ',' + ordered_json(m.fit.lambda_min).dump();
        out += ',' + ordered_json(m.fit.lambda_max).dump();
        out += m.fit.fallback_used ? ",true\n" : ",false\n";
    }
    return out;
}

ModelAnalysis analysis_from_json(const std::string & text, MetricName * metric_out) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const std::exception & e) {
        throw_data(std::string("malformed metrics report: ") + e.what());
    }
    ModelAnalysis analysis;
    try {
        if (metric_out != nullptr) {
            MetricName m = MetricName::alpha_hill;
            metric_from_name(doc.value("metric", "alpha_hill"), m);
            *metric_out = m;
        }
        for (const auto & row : doc.at("rows")) {
            MatrixMetrics m;
            m.name = row.at("name").get<std::string>();
            m.block_index = row.at("block").get<int>();
            m.param_count = row.at("d").get<std::size_t>();
            if (row.contains("shape") && row["shape"].is_array() && row["shape"].size() == 2) {
                m.rows = row["shape"][0].get<std::size_t>();
                m.cols = row["shape"][1].get<std::size_t>();
            }
            m.alpha_hill = row.at("alpha_hill").get<double>();
            m.alpha_hat = row.at("alpha_hat").get<double>();
            m.stable_rank = row.at("stable_rank").get<double>();
            m.entropy = row.at("entropy").get<double>();
            m.frobenius_sq = row.at("frobenius_sq").get<double>();
            m.spectral_sq = row.at("spectral_sq").get<double>();
            m.fit.alpha = m.alpha_hill;
            m.fit.k = row.at("k").get<int>();
            m.fit.lambda_min = row.at("lambda_min").get<double>();
            m.fit.lambda_max = row.at("lambda_max").get<double>();
            m.fit.fallback_used = row.at("fallback_used").get<bool>();
            analysis.matrices.push_back(std::move(m));
        }
        if (doc.contains("failures")) {
            for (const auto & item : doc["failures"]) {
                AnalysisFailure f;
                f.name = item.at("name").get<std::string>();
                f.block_index = item.at("block").get<int>();
                f.param_count = item.at("d").get<std::size_t>();
                f.message = item.value("error", std::string{});
                analysis.failures.push_back(std::move(f));
            }
        }
        if (doc.contains("blocks")) {
            for (const auto & item : doc["blocks"]) {
                BlockQuality b;
                b.block_index = item.at("block").get<int>();
                b.q = item.at("q").get<double>();
                b.d = item.at("d").get<std::size_t>();
                analysis.blocks.push_back(b);
            }
        }
    } catch (const Error &) {
        throw;
    } catch (const std::exception & e) {
        throw_data(std::string("malformed metrics report: ") + e.what());
    }
    return analysis;
}

} // namespace specprune
