#ifndef TIMELY_PSEUDOTIME_HPP
#define TIMELY_PSEUDOTIME_HPP

#include "timely/core.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

/**
 * @file pseudotime.hpp
 *
 * @brief Orders cells along a trajectory fitted in a low-dimensional embedding.
 *
 * The pipeline is `embed()` -> `fit_curve()` or `fit_tree()` -> `project()`.
 * Both trajectory kinds are stored as a skeleton graph: a curve is a path
 * whose vertex 0 is the root.
 */

namespace timely::pseudotime {

enum class EmbedMethod { mds, diffusion_map };

struct Embedding {
    RowMatrix coords;
    EmbedMethod method = EmbedMethod::mds;
    /// Kernel bandwidth actually used (diffusion maps only).
    double bandwidth = 0.0;
};

/**
 * Classical MDS keeps the top `dims` eigenvectors of the double-centred
 * squared-distance matrix scaled by the root eigenvalues. Diffusion maps use a
 * Gaussian kernel exp(-d^2 / (2 h^2)) with `bandwidth` h (median pairwise
 * distance by default) and return the top `dims` nontrivial right eigenvectors
 * of the row-normalised kernel scaled by their eigenvalues.
 *
 * Each coordinate's sign is fixed so its largest-magnitude entry is positive.
 *
 * @throws DegenerateError if all points coincide.
 */
Embedding embed(const RowMatrix& features, EmbedMethod method, int dims = 2,
                std::optional<double> bandwidth = std::nullopt);

struct KMeansResult {
    RowMatrix centers;
    std::vector<int> assignment;
    int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations. Re-seeds up to 3 times on an empty cluster.
KMeansResult kmeans(const RowMatrix& points, int clusters, std::uint64_t seed, int max_iter = 100);

enum class TrajectoryKind { curve, tree };

struct Branch {
    /// Skeleton vertices from the branch start (root or branch point) outwards.
    std::vector<int> path;
    int parent = -1;
};

struct TrajectoryModel {
    TrajectoryKind kind = TrajectoryKind::curve;
    RowMatrix vertices;
    /// Each edge is stored as (root-side vertex, outer vertex).
    std::vector<std::pair<int, int>> edges;
    int root = 0;
    std::vector<Branch> branches;
    std::vector<int> edge_branch;
    /// Distance along the skeleton from the root, per vertex.
    std::vector<double> arclength;
    /// Raw arclength -> pseudotime is (s - offset) / scale; set by project().
    double pseudotime_offset = 0.0;
    double pseudotime_scale = 1.0;
};

enum class CurveInit {
    /// Connect k-means centres.
    kmeans,
    /// Connect observed-label centroids in chain order (chain topologies only).
    label_centroids,
    /// Straight line along the direction whose projection has the largest rank
    /// correlation with the observed stage depth.
    label_direction,
};

struct CurveOptions {
    /// 0 means one cluster per state.
    int n_clusters = 0;
    int max_iter = 50;
    /// Convergence threshold on vertex movement, relative to the embedding's RMS radius.
    double tol = 1e-4;
    int bins = 100;
    int window = 5;
    std::uint64_t seed = 0;
    CurveInit init = CurveInit::kmeans;
};

/// Builds a path model through `vertices` with vertex 0 as root.
TrajectoryModel path_model(RowMatrix vertices);

/**
 * Orients edges away from `root` and fills arclengths and branches. Branches
 * run between the root, branch points (degree >= 3) and leaves.
 *
 * @throws ValidationError unless the edges form a spanning tree.
 */
void build_skeleton(TrajectoryModel& model, std::vector<std::pair<int, int>> edges, int root);

/// Orders k-means centres by a nearest-neighbour chain from one end of the farthest pair.
std::vector<int> order_centers(const RowMatrix& centers);

/**
 * Principal-curve refinement: project points onto the polyline, average them
 * per arclength bin, smooth the bin means with a moving average, resample,
 * and repeat until vertices stop moving.
 *
 * `labels` and `topology` are only consulted by the label-guided initialisations.
 */
TrajectoryModel fit_curve(const Embedding& embedding, const CurveOptions& options,
                          const LineageTopology* topology = nullptr, std::span<const int> labels = {});

/**
 * k-means centres joined by their Euclidean minimum spanning tree. The root
 * is the centre nearest the centroid of cells observed in the root state.
 */
TrajectoryModel fit_tree(const Embedding& embedding, int n_clusters, std::uint64_t seed,
                         const LineageTopology& topology, std::span<const int> labels);

struct Location {
    int edge = 0;
    int branch = 0;
    /// Raw arclength from the root.
    double arclength = 0.0;
    double squared_distance = 0.0;
};

/// Nearest point on the skeleton; ties go to the lower edge index.
Location locate(const TrajectoryModel& model, std::span<const double> point);

/**
 * Projects cells onto the trajectory and orders them.
 *
 * For curves the model is reversed when cells observed in the root state sit
 * further along than the rest. Pseudotime is min-max normalised to [0, 1] and
 * the normalisation is stored in `model`. Cells are grouped by branch (parents
 * first) and sorted by pseudotime, ties by input row. Each branch's first cell
 * takes the last cell of the nearest ancestor branch with cells as its
 * predecessor, or the globally earliest cell if there is none.
 */
OrderedDataset project(const Embedding& embedding, TrajectoryModel& model, const LineageTopology& topology,
                       std::span<const CellRecord> cells);

struct NewCellLabel {
    int label = 0;
    double pseudotime = 0.0;
    int branch = 0;
    bool clamped = false;
};

/**
 * Labels cells that were not part of the fit by looking up their pseudotime in
 * the report's border intervals for their branch. A cell exactly on a border
 * gets the later state.
 */
std::vector<NewCellLabel> project_new(const TrajectoryModel& model, const ConsistencyReport& report,
                                      const RowMatrix& coords);

}  // namespace timely::pseudotime

#endif
