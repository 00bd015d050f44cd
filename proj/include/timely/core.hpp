#ifndef TIMELY_CORE_HPP
#define TIMELY_CORE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

/**
 * @file core.hpp
 *
 * @brief Shared data model for cell ordering and label-consistency inference.
 *
 * State labels are 0-based indices everywhere in memory. Files and the HTTP
 * API use state names or 1-based indices; conversion happens at the I/O edge.
 */

namespace timely {

/// Dense row-major matrix; one observation per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line);
    std::size_t line() const { return line_; }
private:
    std::size_t line_;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class TopologyError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Numerically degenerate input (e.g. all points identical).
class DegenerateError : public Error {
public:
    using Error::Error;
};

struct CellRecord {
    std::string id;
    std::vector<double> features;
    int observed_label = 0;
    std::string image_ref;
};

/**
 * @brief Directed tree of cell-type states.
 *
 * Every state may stay in itself or move to one of its children. States
 * without children are end stages.
 */
class LineageTopology {
public:
    LineageTopology() = default;

    /**
     * @param states State names, indexed in the given order.
     * @param root Index of the root state.
     * @param edges (parent, child) index pairs.
     * @throws TopologyError if the edges do not form a tree rooted at `root`.
     */
    LineageTopology(std::vector<std::string> states, int root, std::vector<std::pair<int, int>> edges);

    int size() const { return static_cast<int>(states_.size()); }
    int root() const { return root_; }
    const std::vector<std::string>& states() const { return states_; }
    const std::string& name(int state) const { return states_.at(state); }
    std::optional<int> index_of(std::string_view name) const;

    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::vector<int>& children(int state) const { return children_.at(state); }
    /// -1 for the root.
    int parent(int state) const { return parent_.at(state); }

    /// True for self-transitions and topology edges.
    bool allowed(int from, int to) const;
    bool is_end_stage(int state) const { return children_.at(state).empty(); }
    /// Number of edges between the root and `state`.
    int depth(int state) const;

private:
    std::vector<std::string> states_;
    int root_ = 0;
    std::vector<std::pair<int, int>> edges_;
    std::vector<std::vector<int>> children_;
    std::vector<int> parent_;
};

/// Chain topology over states named "1".."K", rooted at the first.
LineageTopology chain_topology(int classes);

struct TransitionParam {
    double p = 0.0;
    double lambda = 1.0;
};

using TransitionKey = std::pair<int, int>;

/**
 * @brief Parameters of the inhomogeneous hidden Markov tree.
 *
 * `trans` holds an entry for every allowed transition (self-edges and
 * topology edges) and nothing else.
 */
struct HmtParams {
    std::vector<double> pi;
    Eigen::MatrixXd emission;
    std::map<TransitionKey, TransitionParam> trans;
};

inline constexpr double probability_tolerance = 1e-12;

/// @throws ValidationError on any violated probability or rate constraint.
void validate(const HmtParams& params, const LineageTopology& topology);

/// @throws ValidationError unless `matrix` is square and row-stochastic.
void validate_stochastic(const Eigen::MatrixXd& matrix, std::string_view what);

/**
 * Start probabilities put `pi_root_mass` on the root and spread the rest
 * uniformly. Transitions start uniform over allowed targets with a common
 * rate `initial_rate`; end stages get p_kk = 1.
 */
HmtParams default_params(const LineageTopology& topology, const Eigen::MatrixXd& emission,
                         double pi_root_mass = 0.9, double initial_rate = 1.0);

/// Expert error model for the five-stage granulopoiesis chain (PMY, MY, MMY, BNE, SNE).
Eigen::MatrixXd granulopoiesis_emission();

/// `diagonal` on the diagonal, the remainder split evenly across the row.
Eigen::MatrixXd symmetric_emission(int classes, double diagonal);

/// Cells in trajectory order with their ordering structure.
struct OrderedDataset {
    std::vector<CellRecord> cells;
    std::vector<double> pseudotime;
    std::vector<int> branch_id;
    /// Index of the predecessor in this ordering; -1 for the first cell.
    std::vector<int> predecessor;
    /// Pseudotime gap to the predecessor; 0 for the first cell.
    std::vector<double> y;
    /// Row of each cell in the input it was ordered from.
    std::vector<std::size_t> source_index;

    std::size_t size() const { return cells.size(); }
};

struct CellVerdict {
    std::string id;
    int observed_label = 0;
    int inferred_label = 0;
    bool flagged = false;
    double pseudotime = 0.0;
    int branch_id = 0;
    std::string image_ref;
};

struct Border {
    int branch_id = 0;
    int from_state = 0;
    int to_state = 0;
    double pseudotime = 0.0;

    bool operator==(const Border&) const = default;
};

struct ConsistencyReport {
    std::vector<std::string> states;
    std::vector<CellVerdict> cells;
    std::vector<Border> borders;
    double log_likelihood = 0.0;
    HmtParams params;
};

/// Copies features into a matrix; all records must share one dimension.
RowMatrix feature_matrix(std::span<const CellRecord> cells);

std::vector<int> observed_labels(std::span<const CellRecord> cells);

}  // namespace timely

#endif
