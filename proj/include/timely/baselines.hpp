#ifndef TIMELY_BASELINES_HPP
#define TIMELY_BASELINES_HPP

#include "timely/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

/**
 * @file baselines.hpp
 *
 * @brief Neighbourhood and confident-learning label-noise flaggers.
 *
 * All distances are Euclidean on the raw feature rows. Equal distances are
 * broken toward the lower row index, so every method is deterministic.
 */

namespace timely::baselines {

enum class NeighborMode { nn, ncn };

struct FlagResult {
    std::vector<bool> flagged;
    /// Final labels, for methods that relabel.
    std::optional<std::vector<int>> proposed;
    std::string method;
    std::map<std::string, double> hyperparams;

    std::size_t count() const;
};

/**
 * Neighbour set of every row, excluding the row itself.
 *
 * `ncn` builds the set greedily: each step adds the point that keeps the
 * centroid of the chosen set closest to the query.
 */
std::vector<std::vector<int>> neighbor_sets(const RowMatrix& features, int k, NeighborMode mode);

/// Flags a row when the majority label of its neighbours differs from its own or the vote ties.
FlagResult knn_flag(const RowMatrix& features, std::span<const int> labels, int k, NeighborMode mode);

/**
 * Generalised editing in row order: a row is relabelled as soon as at least
 * `k_prime` of its `k` neighbours share one other label. Later rows see the
 * edited labels. Nothing is deleted.
 */
FlagResult knn_edit(const RowMatrix& features, std::span<const int> labels, int k, int k_prime, NeighborMode mode);

struct ConfidentOptions {
    int folds = 5;
    double l2 = 1e-3;
    std::uint64_t seed = 0;
};

/// Stratified fold id per row; throws if a present class has fewer rows than folds.
std::vector<int> stratified_folds(std::span<const int> labels, int classes, int folds, std::uint64_t seed);

/**
 * L2-penalised multinomial logistic regression (Newton ascent on the mean
 * log-likelihood). Returns a (d + 1) x K weight matrix, last row the intercept.
 * Features are used as given.
 */
Eigen::MatrixXd fit_logistic(const RowMatrix& features, std::span<const int> labels, int classes, double l2);

Eigen::MatrixXd predict_logistic(const Eigen::MatrixXd& weights, const RowMatrix& features);

/// Out-of-fold class probabilities (n x K); each fold is standardised on its training rows.
Eigen::MatrixXd cross_val_probabilities(const RowMatrix& features, std::span<const int> labels, int classes,
                                        const ConfidentOptions& options);

/// Confident joint: rows are given labels, columns the thresholded argmax.
Eigen::MatrixXi confident_joint(const Eigen::MatrixXd& probabilities, std::span<const int> labels);

/// Prune by noise rate on precomputed out-of-sample probabilities.
FlagResult confident_flag_from_probabilities(const Eigen::MatrixXd& probabilities, std::span<const int> labels);

FlagResult confident_flag(const RowMatrix& features, std::span<const int> labels, int classes,
                          const ConfidentOptions& options = {});

}  // namespace timely::baselines

#endif
