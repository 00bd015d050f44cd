#include "timely/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace timely::eval {

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
        for (std::size_t q = i; q < j; ++q) r[order[q]] = 0.5 * static_cast<double>(i + j - 1);
        i = j;
    }
    return r;
}

}  // namespace

Metrics score(const std::vector<bool>& flagged, const std::vector<bool>& noisy_mask, std::span<const int> ground_truth,
              const std::vector<int>* proposed) {
    if (flagged.size() != noisy_mask.size()) {
        throw ValidationError("flag vector and noise mask differ in length");
    }
    const std::size_t n = flagged.size();
    std::size_t hit = 0, selected = 0, noisy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        selected += flagged[i];
        noisy += noisy_mask[i];
        hit += flagged[i] && noisy_mask[i];
    }
    Metrics m;
    m.selected_items = n ? static_cast<double>(selected) / static_cast<double>(n) : 0.0;
    if (selected == 0) {
        m.precision = noisy == 0 ? 1.0 : 0.0;
    } else {
        m.precision = static_cast<double>(hit) / static_cast<double>(selected);
    }
    m.recall = noisy == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(noisy);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (proposed) {
        if (proposed->size() != n || ground_truth.size() != n) {
            throw ValidationError("proposed labels and ground truth must match the flag vector");
        }
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) correct += (*proposed)[i] == ground_truth[i];
        m.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 1.0;
    }
    return m;
}

Eigen::MatrixXd confusion(std::span<const int> observed, std::span<const int> inferred, int classes, bool normalize) {
    if (observed.size() != inferred.size()) {
        throw ValidationError("label vectors differ in length");
    }
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(classes, classes);
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (observed[i] < 0 || observed[i] >= classes || inferred[i] < 0 || inferred[i] >= classes) {
            throw ValidationError("label out of range");
        }
        c(observed[i], inferred[i]) += 1.0;
    }
    if (normalize) {
        for (Eigen::Index r = 0; r < c.rows(); ++r) {
            double s = c.row(r).sum();
            if (s > 0.0) c.row(r) /= s;
        }
    }
    return c;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw ValidationError("spearman needs two equal-length samples of size >= 2");
    }
    auto ra = average_ranks(a);
    auto rb = average_ranks(b);
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace timely::eval
