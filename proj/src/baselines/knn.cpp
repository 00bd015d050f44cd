#include "timely/baselines.hpp"

#include "timely/geometry.hpp"
#include "timely/kernels.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

namespace timely::baselines {

namespace {

void check_inputs(const RowMatrix& features, std::span<const int> labels, int k) {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw ValidationError("labels do not align with feature rows");
    }
    if (k < 1 || k >= features.rows()) {
        throw ValidationError("k must satisfy 1 <= k < n");
    }
    for (int l : labels) {
        if (l < 0) throw ValidationError("negative label");
    }
}

std::span<const double> flat(const RowMatrix& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
}

// Index of the smallest distance, skipping `used`; ties toward the lower index.
int argmin_unused(const std::vector<double>& d, const std::vector<char>& used) {
    int best = -1;
    for (std::size_t j = 0; j < d.size(); ++j) {
        if (!used[j] && (best < 0 || d[j] < d[static_cast<std::size_t>(best)])) {
            best = static_cast<int>(j);
        }
    }
    return best;
}

std::string mode_name(NeighborMode mode) { return mode == NeighborMode::nn ? "knn" : "kncn"; }

}  // namespace

std::size_t FlagResult::count() const { return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), true)); }

std::vector<std::vector<int>> neighbor_sets(const RowMatrix& features, int k, NeighborMode mode) {
    const auto n = static_cast<std::size_t>(features.rows());
    const auto d = static_cast<std::size_t>(features.cols());
    if (k < 1 || static_cast<std::size_t>(k) >= n) {
        throw ValidationError("k must satisfy 1 <= k < n");
    }
    std::vector<std::vector<int>> out(n);
    std::vector<double> dist(n);
    std::vector<char> used(n);
    std::vector<double> target(d);
    std::vector<double> sum(d);
    for (std::size_t i = 0; i < n; ++i) {
        auto query = row_span(features, static_cast<Eigen::Index>(i));
        std::fill(used.begin(), used.end(), 0);
        used[i] = 1;
        kernels::squared_distances(query, flat(features), dist);
        if (mode == NeighborMode::nn) {
            std::vector<int> idx;
            idx.reserve(n - 1);
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) idx.push_back(static_cast<int>(j));
            }
            std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                              [&](int a, int b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); });
            out[i].assign(idx.begin(), idx.begin() + k);
            continue;
        }
        // Centroid of S + {j} is closest to q exactly when x_j is closest to (m+1) q - sum(S).
        std::fill(sum.begin(), sum.end(), 0.0);
        for (int m = 0; m < k; ++m) {
            if (m > 0) {
                for (std::size_t c = 0; c < d; ++c) target[c] = (m + 1) * query[c] - sum[c];
                kernels::squared_distances(target, flat(features), dist);
            }
            int pick = argmin_unused(dist, used);
            used[static_cast<std::size_t>(pick)] = 1;
            out[i].push_back(pick);
            auto row = row_span(features, pick);
            for (std::size_t c = 0; c < d; ++c) sum[c] += row[c];
        }
    }
    return out;
}

FlagResult knn_flag(const RowMatrix& features, std::span<const int> labels, int k, NeighborMode mode) {
    check_inputs(features, labels, k);
    const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
    auto sets = neighbor_sets(features, k, mode);
    FlagResult out;
    out.method = mode_name(mode);
    out.hyperparams = {{"k", k}};
    out.flagged.assign(labels.size(), false);
    std::vector<int> votes(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        for (int j : sets[i]) ++votes[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])];
        const int top = *std::max_element(votes.begin(), votes.end());
        const bool tie = std::count(votes.begin(), votes.end(), top) > 1;
        out.flagged[i] = tie || votes[static_cast<std::size_t>(labels[i])] != top;
    }
    return out;
}

FlagResult knn_edit(const RowMatrix& features, std::span<const int> labels, int k, int k_prime, NeighborMode mode) {
    check_inputs(features, labels, k);
    if (2 * k_prime < k + 1 || k_prime > k) {
        throw ValidationError("k' must satisfy (k + 1) / 2 <= k' <= k");
    }
    const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
    auto sets = neighbor_sets(features, k, mode);
    std::vector<int> current(labels.begin(), labels.end());
    std::vector<int> votes(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < current.size(); ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        for (int j : sets[i]) ++votes[static_cast<std::size_t>(current[static_cast<std::size_t>(j)])];
        for (int c = 0; c < classes; ++c) {
            if (c != current[i] && votes[static_cast<std::size_t>(c)] >= k_prime) {
                current[i] = c;
                break;
            }
        }
    }
    FlagResult out;
    out.method = mode_name(mode) + "-edit";
    out.hyperparams = {{"k", k}, {"k_prime", k_prime}};
    out.flagged.resize(current.size());
    for (std::size_t i = 0; i < current.size(); ++i) out.flagged[i] = current[i] != labels[i];
    out.proposed = std::move(current);
    return out;
}

}  // namespace timely::baselines
