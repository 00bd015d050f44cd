#ifndef TIMELY_EVAL_HPP
#define TIMELY_EVAL_HPP

#include "timely/core.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace timely::eval {

struct Metrics {
    /// Only for methods that propose labels.
    std::optional<double> accuracy;
    double selected_items = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/**
 * Scores a flag vector against the noise mask. Precision is 1 when nothing is
 * flagged and nothing is noisy, 0 when something is flagged but nothing noisy
 * is hit; recall is 1 when nothing is noisy.
 */
Metrics score(const std::vector<bool>& flagged, const std::vector<bool>& noisy_mask,
              std::span<const int> ground_truth = {}, const std::vector<int>* proposed = nullptr);

/// K x K counts of (observed, inferred); with `normalize`, non-empty rows sum to 1.
Eigen::MatrixXd confusion(std::span<const int> observed, std::span<const int> inferred, int classes,
                          bool normalize = false);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

struct MetricRow {
    std::string method;
    int noise_level = 0;
    std::optional<double> accuracy;
    std::optional<double> accuracy_std;
    double selected_items = 0.0;
    double selected_items_std = 0.0;
    double precision = 0.0;
    double precision_std = 0.0;
    double recall = 0.0;
    double recall_std = 0.0;
    double f1 = 0.0;
    double f1_std = 0.0;
    /// Seeds that produced a result.
    int seeds = 0;
    int failed_seeds = 0;
};

struct RunRecord {
    std::string method;
    int noise_level = 0;
    std::uint64_t seed = 0;
    std::optional<Metrics> metrics;
    std::string error;
    double seconds = 0.0;
};

inline const std::vector<std::string>& all_methods() {
    static const std::vector<std::string> m{"timely", "knn", "knn-edit", "kncn", "kncn-edit", "confident"};
    return m;
}

struct BenchmarkConfig {
    std::vector<int> noise_levels{10, 20, 30};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<std::string> methods = all_methods();
    int n = 250;
    int classes = 5;
    int dim = 50;
    int k = 3;
    int k_prime = 2;
    int folds = 5;
    /// 0 means one per hardware thread.
    int threads = 0;
};

struct BenchmarkResult {
    /// One row per (noise level, method) in configuration order.
    std::vector<MetricRow> rows;
    std::vector<RunRecord> runs;
    double seconds = 0.0;

    const MetricRow* find(const std::string& method, int noise_level) const;
};

/**
 * Simulates every (noise level, seed) pair with sub-seed seed + level, shuffles
 * the cells with a seeded permutation so input order carries no information,
 * runs every requested method on the same data and averages over seeds.
 */
BenchmarkResult run_benchmark(const BenchmarkConfig& config);

void write_csv(std::ostream& out, std::span<const MetricRow> rows);
nlohmann::json to_json(const BenchmarkResult& result);

}  // namespace timely::eval

#endif
