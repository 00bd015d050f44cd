#include "timely/markov.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace timely::markov {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

std::vector<int> targets(const LineageTopology& topology, int from) {
    std::vector<int> out{from};
    for (int c : topology.children(from)) {
        out.push_back(c);
    }
    return out;
}

bool equal_rates(const HmtParams& params, int from, const std::vector<int>& to) {
    const double first = params.trans.at({from, to.front()}).lambda;
    for (int l : to) {
        if (params.trans.at({from, l}).lambda != first) {
            return false;
        }
    }
    return true;
}

// Unnormalised log weights log p + log lambda - lambda y.
void log_weights(const HmtParams& params, int from, const std::vector<int>& to, double y, std::vector<double>& w) {
    w.resize(to.size());
    for (std::size_t i = 0; i < to.size(); ++i) {
        const auto& tp = params.trans.at({from, to[i]});
        w[i] = tp.p > 0.0 ? std::log(tp.p) + std::log(tp.lambda) - tp.lambda * y : neg_inf;
    }
}

void check_gap(double y) {
    if (!std::isfinite(y) || y < 0.0) {
        throw ValidationError("pseudotime gap must be finite and non-negative");
    }
}

}  // namespace

Eigen::MatrixXd transition_matrix(const HmtParams& params, const LineageTopology& topology, double y) {
    check_gap(y);
    const int k = topology.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
    std::vector<double> w;
    for (int from = 0; from < k; ++from) {
        if (topology.is_end_stage(from)) {
            a(from, from) = 1.0;
            continue;
        }
        auto to = targets(topology, from);
        if (equal_rates(params, from, to)) {
            // Common rates cancel exactly.
            for (int l : to) {
                a(from, l) = params.trans.at({from, l}).p;
            }
            continue;
        }
        log_weights(params, from, to, y, w);
        double top = neg_inf;
        for (double v : w) top = std::max(top, v);
        double sum = 0.0;
        for (std::size_t i = 0; i < to.size(); ++i) {
            double e = std::exp(w[i] - top);
            a(from, to[i]) = e;
            sum += e;
        }
        for (int l : to) {
            a(from, l) /= sum;
        }
    }
    return a;
}

Eigen::MatrixXd log_transition_matrix(const HmtParams& params, const LineageTopology& topology, double y) {
    check_gap(y);
    const int k = topology.size();
    Eigen::MatrixXd a = Eigen::MatrixXd::Constant(k, k, neg_inf);
    std::vector<double> w;
    for (int from = 0; from < k; ++from) {
        if (topology.is_end_stage(from)) {
            a(from, from) = 0.0;
            continue;
        }
        auto to = targets(topology, from);
        if (equal_rates(params, from, to)) {
            for (int l : to) {
                double p = params.trans.at({from, l}).p;
                a(from, l) = p > 0.0 ? std::log(p) : neg_inf;
            }
            continue;
        }
        log_weights(params, from, to, y, w);
        double top = neg_inf;
        for (double v : w) top = std::max(top, v);
        double sum = 0.0;
        for (double v : w) sum += std::exp(v - top);
        const double norm = top + std::log(sum);
        for (std::size_t i = 0; i < to.size(); ++i) {
            a(from, to[i]) = w[i] - norm;
        }
    }
    return a;
}

}  // namespace timely::markov
