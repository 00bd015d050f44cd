#include "timely/pseudotime.hpp"

#include "timely/geometry.hpp"
#include "timely/kernels.hpp"
#include "timely/rng.hpp"

#include <limits>
#include <optional>

namespace timely::pseudotime {

namespace {

std::optional<KMeansResult> attempt(const RowMatrix& points, int clusters, std::uint64_t seed, int max_iter) {
    const Eigen::Index n = points.rows();
    const Eigen::Index d = points.cols();
    Rng rng(seed);

    RowMatrix centers(clusters, d);
    centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n))));
    std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (int c = 1; c < clusters; ++c) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = kernels::squared_distance(row_span(points, i), row_span(centers, c - 1));
            nearest[i] = std::min(nearest[i], v);
            total += nearest[i];
        }
        if (!(total > 0.0)) {
            return std::nullopt;
        }
        double target = rng.uniform() * total;
        Eigen::Index pick = n - 1;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            acc += nearest[i];
            if (acc > target && nearest[i] > 0.0) {
                pick = i;
                break;
            }
        }
        centers.row(c) = points.row(pick);
    }

    KMeansResult out;
    out.assignment.assign(static_cast<std::size_t>(n), -1);
    std::vector<double> dist(static_cast<std::size_t>(clusters));
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            kernels::squared_distances(row_span(points, i), {centers.data(), static_cast<std::size_t>(centers.size())}, dist);
            int best = 0;
            for (int c = 1; c < clusters; ++c) {
                if (dist[c] < dist[best]) {
                    best = c;
                }
            }
            if (out.assignment[i] != best) {
                out.assignment[i] = best;
                changed = true;
            }
        }
        out.iterations = iter + 1;

        RowMatrix sums = RowMatrix::Zero(clusters, d);
        std::vector<int> counts(static_cast<std::size_t>(clusters), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(out.assignment[i]) += points.row(i);
            ++counts[out.assignment[i]];
        }
        for (int c = 0; c < clusters; ++c) {
            if (counts[c] == 0) {
                return std::nullopt;
            }
            centers.row(c) = sums.row(c) / counts[c];
        }
        if (!changed) {
            break;
        }
    }
    out.centers = std::move(centers);
    return out;
}

}  // namespace

KMeansResult kmeans(const RowMatrix& points, int clusters, std::uint64_t seed, int max_iter) {
    if (clusters < 1 || clusters > points.rows()) {
        throw ValidationError("k-means needs 1 <= clusters <= points");
    }
    for (std::uint64_t retry = 0; retry <= 3; ++retry) {
        if (auto res = attempt(points, clusters, seed + retry * 0x9E3779B97F4A7C15ULL, max_iter)) {
            return std::move(*res);
        }
    }
    throw DegenerateError("k-means produced an empty cluster after 3 re-seeds");
}

}  // namespace timely::pseudotime
