#include "timely/core.hpp"

#include <cmath>
#include <string>

namespace timely {

ParseError::ParseError(const std::string& what, std::size_t line)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

LineageTopology::LineageTopology(std::vector<std::string> states, int root,
                                 std::vector<std::pair<int, int>> edges)
    : states_(std::move(states)), root_(root), edges_(std::move(edges)) {
    const int k = size();
    if (k == 0) {
        throw TopologyError("topology has no states");
    }
    if (root_ < 0 || root_ >= k) {
        throw TopologyError("root index out of range");
    }
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            if (states_[i] == states_[j]) {
                throw TopologyError("duplicate state name '" + states_[i] + "'");
            }
        }
    }

    children_.assign(k, {});
    parent_.assign(k, -1);
    for (const auto& [from, to] : edges_) {
        if (from < 0 || from >= k || to < 0 || to >= k) {
            throw TopologyError("edge references unknown state");
        }
        if (from == to) {
            throw TopologyError("explicit self-edge on '" + states_[from] + "'");
        }
        if (to == root_) {
            throw TopologyError("edge into root '" + states_[to] + "' creates a cycle");
        }
        if (parent_[to] != -1) {
            throw TopologyError("state '" + states_[to] + "' has multiple parents");
        }
        parent_[to] = from;
        children_[from].push_back(to);
    }

    // With one parent per non-root state, reachability from the root rules out cycles.
    std::vector<char> seen(k, 0);
    std::vector<int> stack{root_};
    seen[root_] = 1;
    while (!stack.empty()) {
        int s = stack.back();
        stack.pop_back();
        for (int c : children_[s]) {
            if (!seen[c]) {
                seen[c] = 1;
                stack.push_back(c);
            }
        }
    }
    for (int i = 0; i < k; ++i) {
        if (!seen[i]) {
            throw TopologyError("state '" + states_[i] + "' is not reachable from the root (cycle or disconnected)");
        }
    }
}

std::optional<int> LineageTopology::index_of(std::string_view name) const {
    for (int i = 0; i < size(); ++i) {
        if (states_[i] == name) {
            return i;
        }
    }
    return std::nullopt;
}

bool LineageTopology::allowed(int from, int to) const {
    return from == to || parent_.at(to) == from;
}

int LineageTopology::depth(int state) const {
    int d = 0;
    for (int s = parent_.at(state); s != -1; s = parent_[s]) {
        ++d;
    }
    return d;
}

LineageTopology chain_topology(int classes) {
    if (classes < 1) {
        throw ValidationError("chain topology needs at least one state");
    }
    std::vector<std::string> names;
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < classes; ++i) {
        names.push_back(std::to_string(i + 1));
        if (i > 0) {
            edges.emplace_back(i - 1, i);
        }
    }
    return LineageTopology(std::move(names), 0, std::move(edges));
}

void validate_stochastic(const Eigen::MatrixXd& matrix, std::string_view what) {
    if (matrix.rows() != matrix.cols() || matrix.rows() == 0) {
        throw ValidationError(std::string(what) + " must be a non-empty square matrix");
    }
    for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
            double v = matrix(r, c);
            if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
                throw ValidationError(std::string(what) + " has an entry outside [0, 1] in row " + std::to_string(r + 1));
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > probability_tolerance) {
            throw ValidationError(std::string(what) + " row " + std::to_string(r + 1) + " does not sum to 1");
        }
    }
}

void validate(const HmtParams& params, const LineageTopology& topology) {
    const int k = topology.size();
    if (static_cast<int>(params.pi.size()) != k) {
        throw ValidationError("start probabilities have wrong length");
    }
    double pi_sum = 0.0;
    for (double v : params.pi) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw ValidationError("start probability outside [0, 1]");
        }
        pi_sum += v;
    }
    if (std::abs(pi_sum - 1.0) > probability_tolerance) {
        throw ValidationError("start probabilities do not sum to 1");
    }
    if (params.emission.rows() != k) {
        throw ValidationError("emission matrix has wrong size");
    }
    validate_stochastic(params.emission, "emission matrix");

    std::vector<double> row_sum(k, 0.0);
    for (const auto& [key, tp] : params.trans) {
        auto [from, to] = key;
        if (from < 0 || from >= k || to < 0 || to >= k || !topology.allowed(from, to)) {
            throw ValidationError("transition parameter defined for a disallowed transition");
        }
        if (!std::isfinite(tp.p) || tp.p < 0.0 || tp.p > 1.0) {
            throw ValidationError("transition probability outside [0, 1]");
        }
        if (!std::isfinite(tp.lambda) || tp.lambda <= 0.0) {
            throw ValidationError("transition rate must be positive");
        }
        row_sum[from] += tp.p;
    }
    for (int s = 0; s < k; ++s) {
        if (!params.trans.contains({s, s})) {
            throw ValidationError("missing self-transition for state '" + topology.name(s) + "'");
        }
        for (int c : topology.children(s)) {
            if (!params.trans.contains({s, c})) {
                throw ValidationError("missing transition " + topology.name(s) + "->" + topology.name(c));
            }
        }
        if (std::abs(row_sum[s] - 1.0) > probability_tolerance) {
            throw ValidationError("transition probabilities out of '" + topology.name(s) + "' do not sum to 1");
        }
        if (topology.is_end_stage(s) && params.trans.at({s, s}).p != 1.0) {
            throw ValidationError("end stage '" + topology.name(s) + "' must keep p = 1 on itself");
        }
    }
}

HmtParams default_params(const LineageTopology& topology, const Eigen::MatrixXd& emission,
                         double pi_root_mass, double initial_rate) {
    const int k = topology.size();
    if (!(pi_root_mass > 0.0 && pi_root_mass < 1.0) && !(k == 1 && pi_root_mass == 1.0)) {
        throw ValidationError("root start mass must lie in (0, 1)");
    }
    if (!(initial_rate > 0.0) || !std::isfinite(initial_rate)) {
        throw ValidationError("initial transition rate must be positive");
    }
    if (emission.rows() != k) {
        throw ValidationError("emission matrix does not match the number of states");
    }
    validate_stochastic(emission, "emission matrix");

    HmtParams params;
    params.emission = emission;
    if (k == 1) {
        params.pi = {1.0};
    } else {
        params.pi.assign(k, (1.0 - pi_root_mass) / (k - 1));
        params.pi[topology.root()] = pi_root_mass;
    }
    for (int s = 0; s < k; ++s) {
        const auto& kids = topology.children(s);
        double p = 1.0 / static_cast<double>(kids.size() + 1);
        params.trans[{s, s}] = {p, initial_rate};
        for (int c : kids) {
            params.trans[{s, c}] = {p, initial_rate};
        }
    }
    return params;
}

Eigen::MatrixXd granulopoiesis_emission() {
    Eigen::MatrixXd b(5, 5);
    b << 0.7, 0.25, 0.04, 0.005, 0.005,
         0.23, 0.52, 0.24, 0.005, 0.005,
         0.03, 0.17, 0.75, 0.045, 0.005,
         0.005, 0.005, 0.03, 0.82, 0.14,
         0.005, 0.005, 0.005, 0.065, 0.92;
    return b;
}

Eigen::MatrixXd symmetric_emission(int classes, double diagonal) {
    if (classes < 1 || !(diagonal > 0.0 && diagonal <= 1.0)) {
        throw ValidationError("invalid symmetric emission parameters");
    }
    if (classes == 1) {
        return Eigen::MatrixXd::Ones(1, 1);
    }
    double off = (1.0 - diagonal) / (classes - 1);
    Eigen::MatrixXd b = Eigen::MatrixXd::Constant(classes, classes, off);
    b.diagonal().setConstant(diagonal);
    return b;
}

RowMatrix feature_matrix(std::span<const CellRecord> cells) {
    if (cells.empty()) {
        return RowMatrix(0, 0);
    }
    const std::size_t d = cells.front().features.size();
    RowMatrix out(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].features.size() != d) {
            throw ValidationError("cell '" + cells[i].id + "' has feature length " +
                                  std::to_string(cells[i].features.size()) + ", expected " + std::to_string(d));
        }
        for (std::size_t j = 0; j < d; ++j) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cells[i].features[j];
        }
    }
    return out;
}

std::vector<int> observed_labels(std::span<const CellRecord> cells) {
    std::vector<int> out;
    out.reserve(cells.size());
    for (const auto& c : cells) {
        out.push_back(c.observed_label);
    }
    return out;
}

}  // namespace timely
