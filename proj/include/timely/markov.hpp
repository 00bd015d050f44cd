#ifndef TIMELY_MARKOV_HPP
#define TIMELY_MARKOV_HPP

#include "timely/core.hpp"

#include <span>
#include <vector>

/**
 * @file markov.hpp
 *
 * @brief Inhomogeneous hidden Markov trees over pseudotime-ordered labels.
 *
 * Hidden states follow the lineage topology; the node tree is the ordering
 * structure (each node's parent is its predecessor). The transition matrix on
 * the edge into node t depends on the pseudotime gap y_t:
 *
 *     A_kl(y) = p_kl lambda_kl exp(-lambda_kl y) / sum_i p_ki lambda_ki exp(-lambda_ki y)
 *
 * over allowed targets i. Disallowed transitions are structural zeros, kept as
 * -infinity in log space.
 */

namespace timely::markov {

struct HmtInstance {
    LineageTopology topology;
    HmtParams params;
    /// Observed state per node (0-based).
    std::vector<int> observed;
    /// Parent node per node; -1 only for node 0, otherwise parent[t] < t.
    std::vector<int> parent;
    /// Pseudotime gap to the parent; ignored for node 0.
    std::vector<double> y;

    std::size_t size() const { return observed.size(); }
};

/// @throws ValidationError on malformed structure, labels or parameters.
void validate(const HmtInstance& instance);

HmtInstance make_instance(const LineageTopology& topology, const OrderedDataset& ordered, HmtParams params);

/// Initial parameters: uniform p over allowed targets, every rate 1 / mean(y).
HmtParams initial_params(const LineageTopology& topology, const OrderedDataset& ordered,
                         const Eigen::MatrixXd& emission, const std::vector<double>& pi);

/// Row-stochastic K x K matrix for gap `y`; end-stage rows are identity rows.
Eigen::MatrixXd transition_matrix(const HmtParams& params, const LineageTopology& topology, double y);

/// Elementwise log of transition_matrix(), with exact -infinity for structural zeros.
Eigen::MatrixXd log_transition_matrix(const HmtParams& params, const LineageTopology& topology, double y);

/// log P(X_1..T). Returns -infinity (with a warning naming the node) if the data are impossible.
double log_likelihood(const HmtInstance& instance);

struct PosteriorSet {
    /// T x K smoothed marginals P(Z_t = k | X).
    Eigen::MatrixXd gamma;
    /// Per node t >= 1: K x K matrix P(Z_parent = k, Z_t = l | X). Empty for node 0.
    std::vector<Eigen::MatrixXd> xi;
    double log_likelihood = 0.0;
};

/**
 * Upward-downward smoothing in log space.
 * @throws InferenceError if the observations have zero probability.
 */
PosteriorSet posteriors(const HmtInstance& instance);

class InferenceError : public Error {
public:
    using Error::Error;
};

struct FitOptions {
    int max_iter = 100;
    double tol = 1e-6;
    /// Re-estimate the emission matrix too; off by default.
    bool learn_emission = false;
    /// Gradient steps per state row in each M-step.
    int inner_steps = 25;
};

struct FitResult {
    HmtParams params;
    /// log-likelihood at the initial parameters, then after each M-step.
    std::vector<double> log_likelihood_trace;
    int iterations = 0;
    bool converged = false;
};

/**
 * Generalized EM over the transition parameters {p, lambda}; pi (and B unless
 * `learn_emission`) stay fixed. Each M-step runs backtracking gradient ascent
 * per state row on unconstrained coordinates (p through a softmax, lambda
 * through exp) and keeps a step only if it raises the expected complete-data
 * log-likelihood.
 */
FitResult fit(const HmtInstance& instance, const FitOptions& options = {});

/// Expected complete-data transition term Q for `params` under fixed posteriors.
double expected_transition_log_likelihood(const HmtInstance& instance, const HmtParams& params,
                                          const PosteriorSet& posteriors);

struct ViterbiResult {
    std::vector<int> states;
    /// log P(Z*, X).
    double log_prob = 0.0;
};

/// Max-product on the node tree; ties go to the lower state index.
ViterbiResult viterbi(const HmtInstance& instance);

/**
 * One border per state change between a node and its predecessor, placed at
 * the pseudotime midpoint and attributed to the node's branch.
 */
std::vector<Border> borders(const OrderedDataset& ordered, std::span<const int> states);

}  // namespace timely::markov

#endif
