#include "timely/pseudotime.hpp"

#include "timely/geometry.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <limits>
#include <numeric>

namespace timely::pseudotime {

namespace {

void reverse_curve(TrajectoryModel& model) {
    RowMatrix flipped = model.vertices.colwise().reverse();
    model = path_model(std::move(flipped));
}

}  // namespace

OrderedDataset project(const Embedding& embedding, TrajectoryModel& model, const LineageTopology& topology,
                       std::span<const CellRecord> cells) {
    const RowMatrix& coords = embedding.coords;
    const auto n = static_cast<std::size_t>(coords.rows());
    if (cells.size() != n) {
        throw ValidationError("cells do not align with embedding rows");
    }
    if (n == 0) {
        return {};
    }

    std::vector<Location> loc(n);
    for (std::size_t i = 0; i < n; ++i) {
        loc[i] = locate(model, row_span(coords, static_cast<Eigen::Index>(i)));
    }

    if (model.kind == TrajectoryKind::curve) {
        double root_sum = 0.0;
        double rest_sum = 0.0;
        std::size_t root_n = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (cells[i].observed_label == topology.root()) {
                root_sum += loc[i].arclength;
                ++root_n;
            } else {
                rest_sum += loc[i].arclength;
            }
        }
        if (root_n > 0 && root_n < n && root_sum / root_n > rest_sum / (n - root_n)) {
            reverse_curve(model);
            for (std::size_t i = 0; i < n; ++i) {
                loc[i] = locate(model, row_span(coords, static_cast<Eigen::Index>(i)));
            }
        }
    }

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& l : loc) {
        lo = std::min(lo, l.arclength);
        hi = std::max(hi, l.arclength);
    }
    model.pseudotime_offset = lo;
    model.pseudotime_scale = hi > lo ? hi - lo : 1.0;
    std::vector<double> pt(n);
    for (std::size_t i = 0; i < n; ++i) {
        pt[i] = hi > lo ? std::clamp((loc[i].arclength - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    }

    const std::size_t branches = model.branches.size();
    std::vector<std::vector<std::size_t>> members(branches);
    for (std::size_t i = 0; i < n; ++i) {
        members[static_cast<std::size_t>(loc[i].branch)].push_back(i);
    }
    auto earlier = [&](std::size_t a, std::size_t b) { return pt[a] < pt[b] || (pt[a] == pt[b] && a < b); };
    for (auto& m : members) {
        std::sort(m.begin(), m.end(), earlier);
    }

    std::size_t first = 0;
    for (std::size_t i = 1; i < n; ++i) {
        if (earlier(i, first)) {
            first = i;
        }
    }

    OrderedDataset out;
    std::vector<int> position(n, -1);
    auto emit = [&](std::size_t src, int pred) {
        position[src] = static_cast<int>(out.cells.size());
        out.cells.push_back(cells[src]);
        out.pseudotime.push_back(pt[src]);
        out.branch_id.push_back(loc[src].branch);
        out.predecessor.push_back(pred);
        out.y.push_back(pred < 0 ? 0.0 : std::max(0.0, pt[src] - out.pseudotime[static_cast<std::size_t>(pred)]));
        out.source_index.push_back(src);
    };
    emit(first, -1);

    // Branch ids are assigned parents-first, so ancestors are emitted before descendants.
    std::vector<int> last_cell(branches, -1);
    for (std::size_t b = 0; b < branches; ++b) {
        int pred = -1;
        for (int a = model.branches[b].parent; a >= 0; a = model.branches[static_cast<std::size_t>(a)].parent) {
            if (last_cell[static_cast<std::size_t>(a)] >= 0) {
                pred = last_cell[static_cast<std::size_t>(a)];
                break;
            }
        }
        if (pred < 0) {
            pred = 0;
        }
        for (std::size_t src : members[b]) {
            if (src == first) {
                pred = 0;
                continue;
            }
            emit(src, pred);
            pred = position[src];
        }
        if (!members[b].empty()) {
            last_cell[b] = pred;
        }
    }
    return out;
}

std::vector<NewCellLabel> project_new(const TrajectoryModel& model, const ConsistencyReport& report,
                                      const RowMatrix& coords) {
    const std::size_t branches = model.branches.size();
    std::vector<std::vector<Border>> by_branch(branches);
    for (const auto& b : report.borders) {
        if (b.branch_id < 0 || static_cast<std::size_t>(b.branch_id) >= branches) {
            throw ValidationError("report border refers to an unknown branch");
        }
        by_branch[static_cast<std::size_t>(b.branch_id)].push_back(b);
    }
    for (auto& v : by_branch) {
        std::sort(v.begin(), v.end(), [](const Border& a, const Border& b) { return a.pseudotime < b.pseudotime; });
    }

    // State at the start and end of every branch.
    int fallback = 0;
    double earliest = std::numeric_limits<double>::infinity();
    std::vector<int> first_cell_state(branches, -1);
    std::vector<double> first_cell_pt(branches, std::numeric_limits<double>::infinity());
    for (const auto& c : report.cells) {
        if (c.pseudotime < earliest) {
            earliest = c.pseudotime;
            fallback = c.inferred_label;
        }
        if (c.branch_id >= 0 && static_cast<std::size_t>(c.branch_id) < branches &&
            c.pseudotime < first_cell_pt[static_cast<std::size_t>(c.branch_id)]) {
            first_cell_pt[static_cast<std::size_t>(c.branch_id)] = c.pseudotime;
            first_cell_state[static_cast<std::size_t>(c.branch_id)] = c.inferred_label;
        }
    }
    std::vector<int> start_state(branches, fallback);
    std::vector<int> end_state(branches, fallback);
    for (std::size_t b = 0; b < branches; ++b) {
        int parent = model.branches[b].parent;
        if (!by_branch[b].empty()) {
            start_state[b] = by_branch[b].front().from_state;
        } else if (first_cell_state[b] >= 0) {
            start_state[b] = first_cell_state[b];
        } else if (parent >= 0) {
            start_state[b] = end_state[static_cast<std::size_t>(parent)];
        }
        end_state[b] = by_branch[b].empty() ? start_state[b] : by_branch[b].back().to_state;
    }

    std::vector<NewCellLabel> out;
    out.reserve(static_cast<std::size_t>(coords.rows()));
    for (Eigen::Index i = 0; i < coords.rows(); ++i) {
        Location l = locate(model, row_span(coords, i));
        NewCellLabel res;
        res.branch = l.branch;
        double pt = (l.arclength - model.pseudotime_offset) / model.pseudotime_scale;
        if (pt < 0.0 || pt > 1.0) {
            res.clamped = true;
            spdlog::warn("new cell {} projects to pseudotime {:.4f}; clamping to [0, 1]", i, pt);
            pt = std::clamp(pt, 0.0, 1.0);
        }
        res.pseudotime = pt;
        int state = start_state[static_cast<std::size_t>(l.branch)];
        for (const auto& b : by_branch[static_cast<std::size_t>(l.branch)]) {
            if (pt >= b.pseudotime) {
                state = b.to_state;
            }
        }
        res.label = state;
        out.push_back(res);
    }
    return out;
}

}  // namespace timely::pseudotime
