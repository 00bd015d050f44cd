#include "timely/pseudotime.hpp"

#include "timely/geometry.hpp"
#include "timely/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace timely::pseudotime {

namespace {

double distance(const RowMatrix& m, Eigen::Index a, Eigen::Index b) {
    return std::sqrt(kernels::squared_distance(row_span(m, a), row_span(m, b)));
}

// Arclength of each point's projection onto the polyline through `poly`.
std::vector<double> polyline_arclengths(const RowMatrix& poly, const RowMatrix& points, double* total) {
    const Eigen::Index segs = poly.rows() - 1;
    std::vector<double> cum(static_cast<std::size_t>(poly.rows()), 0.0);
    for (Eigen::Index s = 0; s < segs; ++s) {
        cum[s + 1] = cum[s] + distance(poly, s, s + 1);
    }
    *total = cum.back();

    std::vector<double> out(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        double best_s = 0.0;
        for (Eigen::Index s = 0; s < segs; ++s) {
            Eigen::RowVectorXd a = poly.row(s);
            Eigen::RowVectorXd ab = poly.row(s + 1) - a;
            double len2 = ab.squaredNorm();
            double t = len2 > 0.0 ? std::clamp((points.row(i) - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
            double d2 = (points.row(i) - (a + t * ab)).squaredNorm();
            if (d2 < best) {
                best = d2;
                best_s = cum[s] + t * std::sqrt(len2);
            }
        }
        out[i] = best_s;
    }
    return out;
}

RowMatrix resample(const RowMatrix& poly, int count) {
    const Eigen::Index n = poly.rows();
    std::vector<double> cum(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index s = 0; s + 1 < n; ++s) {
        cum[s + 1] = cum[s] + (poly.row(s + 1) - poly.row(s)).norm();
    }
    const double total = cum.back();
    RowMatrix out(count, poly.cols());
    Eigen::Index seg = 0;
    for (int j = 0; j < count; ++j) {
        double target = count > 1 ? total * j / (count - 1) : 0.0;
        while (seg + 2 < n && cum[seg + 1] < target) {
            ++seg;
        }
        double len = cum[seg + 1] - cum[seg];
        double t = len > 0.0 ? std::clamp((target - cum[seg]) / len, 0.0, 1.0) : 0.0;
        out.row(j) = poly.row(seg) + t * (poly.row(seg + 1) - poly.row(seg));
    }
    return out;
}

bool is_chain(const LineageTopology& topology) {
    for (int s = 0; s < topology.size(); ++s) {
        if (topology.children(s).size() > 1) {
            return false;
        }
    }
    return true;
}

RowMatrix label_centroid_path(const RowMatrix& coords, const LineageTopology& topology, std::span<const int> labels) {
    std::vector<int> chain{topology.root()};
    while (!topology.children(chain.back()).empty()) {
        chain.push_back(topology.children(chain.back()).front());
    }
    std::vector<Eigen::RowVectorXd> centroids;
    for (int state : chain) {
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(coords.cols());
        int count = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == state) {
                sum += coords.row(static_cast<Eigen::Index>(i));
                ++count;
            }
        }
        if (count > 0) {
            centroids.push_back(sum / count);
        }
    }
    RowMatrix out(static_cast<Eigen::Index>(centroids.size()), coords.cols());
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = centroids[i];
    }
    return out;
}

double rank_correlation(const RowMatrix& coords, const Eigen::VectorXd& dir, const Eigen::VectorXd& centred_ranks,
                        std::vector<int>& order) {
    const Eigen::VectorXd t = coords * dir;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return t[a] < t[b] || (t[a] == t[b] && a < b); });
    const double mid = (static_cast<double>(order.size()) - 1.0) / 2.0;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        num += (static_cast<double>(r) - mid) * centred_ranks[order[r]];
        den += (static_cast<double>(r) - mid) * (static_cast<double>(r) - mid);
    }
    const double norm = std::sqrt(den * centred_ranks.squaredNorm());
    return norm > 0.0 ? num / norm : 0.0;
}

// Straight segment along the direction whose projection best rank-correlates
// with the observed stage depth, spanning the projected data.
RowMatrix label_direction_line(const RowMatrix& coords, const LineageTopology& topology, std::span<const int> labels) {
    const Eigen::Index n = coords.rows();
    const Eigen::Index m = coords.cols();
    Eigen::VectorXd depth(n);
    for (Eigen::Index i = 0; i < n; ++i) depth[i] = topology.depth(labels[static_cast<std::size_t>(i)]);

    // Average ranks of the depths, centred.
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return depth[a] < depth[b]; });
    Eigen::VectorXd ranks(n);
    for (Eigen::Index i = 0; i < n;) {
        Eigen::Index j = i;
        while (j < n && depth[order[j]] == depth[order[i]]) ++j;
        for (Eigen::Index q = i; q < j; ++q) ranks[order[q]] = 0.5 * static_cast<double>(i + j - 1);
        i = j;
    }
    ranks.array() -= ranks.mean();
    if (ranks.squaredNorm() == 0.0) {
        return {};
    }

    const Eigen::RowVectorXd mean = coords.colwise().mean();
    const RowMatrix centred = coords.rowwise() - mean;
    Eigen::VectorXd dir = centred.colPivHouseholderQr().solve(Eigen::VectorXd(depth.array() - depth.mean()));
    if (!(dir.norm() > 0.0) || !dir.allFinite()) {
        dir = Eigen::VectorXd::Unit(m, 0);
    }
    dir.normalize();

    constexpr int steps = 720;
    double best = rank_correlation(centred, dir, ranks, order);
    if (best < 0.0) {
        dir = -dir;
        best = -best;
    }
    for (int pass = 0; pass < 3; ++pass) {
        bool moved = false;
        for (Eigen::Index axis = 0; axis < m; ++axis) {
            Eigen::VectorXd u = Eigen::VectorXd::Unit(m, axis);
            u -= u.dot(dir) * dir;
            if (u.norm() < 1e-9) continue;
            u.normalize();
            Eigen::VectorXd pick = dir;
            for (int s = 1; s < steps; ++s) {
                const double theta = std::numbers::pi * s / steps;
                Eigen::VectorXd cand = std::cos(theta) * dir + std::sin(theta) * u;
                double rho = rank_correlation(centred, cand, ranks, order);
                if (rho > best) {
                    best = rho;
                    pick = cand;
                } else if (-rho > best) {
                    best = -rho;
                    pick = -cand;
                }
            }
            if (pick != dir) {
                dir = pick.normalized();
                moved = true;
            }
        }
        if (!moved) break;
    }

    const Eigen::VectorXd t = centred * dir;
    RowMatrix out(2, m);
    out.row(0) = mean + t.minCoeff() * dir.transpose();
    out.row(1) = mean + t.maxCoeff() * dir.transpose();
    return out;
}

}  // namespace

void build_skeleton(TrajectoryModel& model, std::vector<std::pair<int, int>> edges, int root) {
    const int v = static_cast<int>(model.vertices.rows());
    if (v < 2) {
        throw ValidationError("a trajectory needs at least two vertices");
    }
    if (static_cast<int>(edges.size()) != v - 1 || root < 0 || root >= v) {
        throw ValidationError("skeleton edges must form a spanning tree");
    }
    std::vector<std::vector<std::pair<int, int>>> adj(v);  // (neighbour, edge)
    for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
        auto [a, b] = edges[e];
        if (a < 0 || a >= v || b < 0 || b >= v || a == b) {
            throw ValidationError("skeleton edge references an invalid vertex");
        }
        adj[a].emplace_back(b, e);
        adj[b].emplace_back(a, e);
    }

    model.root = root;
    model.arclength.assign(v, -1.0);
    model.arclength[root] = 0.0;
    std::vector<int> order{root};
    for (std::size_t head = 0; head < order.size(); ++head) {
        int u = order[head];
        for (auto [w, e] : adj[u]) {
            if (model.arclength[w] < 0.0) {
                model.arclength[w] = model.arclength[u] + distance(model.vertices, u, w);
                edges[e] = {u, w};
                order.push_back(w);
            }
        }
    }
    if (static_cast<int>(order.size()) != v) {
        throw ValidationError("skeleton is not connected");
    }
    model.edges = std::move(edges);

    model.branches.clear();
    model.edge_branch.assign(model.edges.size(), -1);
    auto is_stop = [&](int u) { return u == root || adj[u].size() != 2; };
    // (start vertex, first edge, parent branch)
    std::vector<std::tuple<int, int, int>> pending;
    for (auto [w, e] : adj[root]) {
        pending.emplace_back(root, e, -1);
    }
    for (std::size_t next = 0; next < pending.size(); ++next) {
        auto [start, first_edge, parent] = pending[next];
        Branch br;
        br.parent = parent;
        br.path.push_back(start);
        int id = static_cast<int>(model.branches.size());
        int prev = start;
        int edge = first_edge;
        while (true) {
            model.edge_branch[edge] = id;
            int cur = model.edges[edge].first == prev ? model.edges[edge].second : model.edges[edge].first;
            br.path.push_back(cur);
            if (is_stop(cur)) {
                for (auto [w, e] : adj[cur]) {
                    if (e != edge) {
                        pending.emplace_back(cur, e, id);
                    }
                }
                break;
            }
            int following = adj[cur][0].second == edge ? adj[cur][1].second : adj[cur][0].second;
            prev = cur;
            edge = following;
        }
        model.branches.push_back(std::move(br));
    }
}

TrajectoryModel path_model(RowMatrix vertices) {
    TrajectoryModel model;
    model.kind = TrajectoryKind::curve;
    model.vertices = std::move(vertices);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i + 1 < model.vertices.rows(); ++i) {
        edges.emplace_back(i, i + 1);
    }
    build_skeleton(model, std::move(edges), 0);
    return model;
}

std::vector<int> order_centers(const RowMatrix& centers) {
    const int k = static_cast<int>(centers.rows());
    if (k <= 1) {
        return std::vector<int>(static_cast<std::size_t>(k), 0);
    }
    int fa = 0;
    int fb = 1;
    double far = -1.0;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            double d = distance(centers, i, j);
            if (d > far) {
                far = d;
                fa = i;
                fb = j;
            }
        }
    }
    auto chain_from = [&](int start, double* length) {
        std::vector<int> path{start};
        std::vector<char> used(static_cast<std::size_t>(k), 0);
        used[start] = 1;
        *length = 0.0;
        while (static_cast<int>(path.size()) < k) {
            int best = -1;
            double best_d = std::numeric_limits<double>::infinity();
            for (int j = 0; j < k; ++j) {
                if (!used[j]) {
                    double d = distance(centers, path.back(), j);
                    if (d < best_d) {
                        best_d = d;
                        best = j;
                    }
                }
            }
            used[best] = 1;
            *length += best_d;
            path.push_back(best);
        }
        return path;
    };
    double la = 0.0;
    double lb = 0.0;
    auto pa = chain_from(fa, &la);
    auto pb = chain_from(fb, &lb);
    return lb < la ? pb : pa;
}

TrajectoryModel fit_curve(const Embedding& embedding, const CurveOptions& options, const LineageTopology* topology,
                          std::span<const int> labels) {
    const RowMatrix& coords = embedding.coords;
    const int clusters = options.n_clusters > 0 ? options.n_clusters : (topology ? topology->size() : 0);
    if (clusters < 2) {
        throw ValidationError("curve fitting needs at least two clusters");
    }
    if (options.bins < 2 || options.window < 1 || options.max_iter < 0) {
        throw ValidationError("invalid principal-curve options");
    }

    RowMatrix poly;
    const bool have_labels = topology && labels.size() == static_cast<std::size_t>(coords.rows());
    if (options.init == CurveInit::label_centroids && have_labels && is_chain(*topology)) {
        poly = label_centroid_path(coords, *topology, labels);
    } else if (options.init == CurveInit::label_direction && have_labels) {
        poly = label_direction_line(coords, *topology, labels);
    }
    if (poly.rows() < 2) {
        auto km = kmeans(coords, clusters, options.seed);
        auto order = order_centers(km.centers);
        poly.resize(clusters, coords.cols());
        for (int i = 0; i < clusters; ++i) {
            poly.row(i) = km.centers.row(order[i]);
        }
    }

    const int count = options.bins + 1;
    RowMatrix current = resample(poly, count);
    const double scale = std::sqrt((coords.rowwise() - coords.colwise().mean()).rowwise().squaredNorm().mean());
    const int half = options.window / 2;

    for (int iter = 0; iter < options.max_iter; ++iter) {
        double total = 0.0;
        auto s = polyline_arclengths(current, coords, &total);
        if (!(total > 0.0)) {
            break;
        }
        RowMatrix sums = RowMatrix::Zero(options.bins, coords.cols());
        std::vector<int> counts(static_cast<std::size_t>(options.bins), 0);
        for (Eigen::Index i = 0; i < coords.rows(); ++i) {
            int b = std::min(options.bins - 1, static_cast<int>(s[i] / total * options.bins));
            sums.row(b) += coords.row(i);
            ++counts[b];
        }
        std::vector<Eigen::RowVectorXd> means;
        for (int b = 0; b < options.bins; ++b) {
            if (counts[b] > 0) {
                means.push_back(sums.row(b) / counts[b]);
            }
        }
        const int m = static_cast<int>(means.size());
        if (m < 2) {
            break;
        }
        RowMatrix smoothed(m, coords.cols());
        for (int j = 0; j < m; ++j) {
            int lo = std::max(0, j - half);
            int hi = std::min(m - 1, j + half);
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(coords.cols());
            for (int q = lo; q <= hi; ++q) {
                acc += means[q];
            }
            smoothed.row(j) = acc / (hi - lo + 1);
        }
        RowMatrix next = resample(smoothed, count);
        if (!((next.row(count - 1) - next.row(0)).norm() > 1e-9 * scale) &&
            (next.rowwise() - next.row(0)).rowwise().norm().maxCoeff() <= 1e-9 * scale) {
            break;  // smoothing collapsed the curve to a point
        }
        double move = (next - current).rowwise().norm().maxCoeff();
        current = std::move(next);
        if (move < options.tol * scale) {
            break;
        }
    }
    return path_model(std::move(current));
}

TrajectoryModel fit_tree(const Embedding& embedding, int n_clusters, std::uint64_t seed, const LineageTopology& topology,
                         std::span<const int> labels) {
    const RowMatrix& coords = embedding.coords;
    const int clusters = n_clusters > 0 ? n_clusters : topology.size();
    if (clusters < 2) {
        throw ValidationError("tree fitting needs at least two clusters");
    }
    auto km = kmeans(coords, clusters, seed);

    // Prim's algorithm on the complete graph of centres.
    std::vector<std::pair<int, int>> edges;
    std::vector<char> in_tree(static_cast<std::size_t>(clusters), 0);
    std::vector<double> best(static_cast<std::size_t>(clusters), std::numeric_limits<double>::infinity());
    std::vector<int> link(static_cast<std::size_t>(clusters), -1);
    in_tree[0] = 1;
    for (int j = 1; j < clusters; ++j) {
        best[j] = distance(km.centers, 0, j);
        link[j] = 0;
    }
    for (int step = 1; step < clusters; ++step) {
        int pick = -1;
        for (int j = 0; j < clusters; ++j) {
            if (!in_tree[j] && (pick < 0 || best[j] < best[pick])) {
                pick = j;
            }
        }
        in_tree[pick] = 1;
        edges.emplace_back(link[pick], pick);
        for (int j = 0; j < clusters; ++j) {
            if (!in_tree[j]) {
                double d = distance(km.centers, pick, j);
                if (d < best[j]) {
                    best[j] = d;
                    link[j] = pick;
                }
            }
        }
    }

    Eigen::RowVectorXd anchor = Eigen::RowVectorXd::Zero(coords.cols());
    int count = 0;
    for (std::size_t i = 0; i < labels.size() && i < static_cast<std::size_t>(coords.rows()); ++i) {
        if (labels[i] == topology.root()) {
            anchor += coords.row(static_cast<Eigen::Index>(i));
            ++count;
        }
    }
    anchor = count > 0 ? Eigen::RowVectorXd(anchor / count) : Eigen::RowVectorXd(coords.colwise().mean());
    int root = 0;
    double root_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < clusters; ++j) {
        double d = (km.centers.row(j) - anchor).squaredNorm();
        if (d < root_d) {
            root_d = d;
            root = j;
        }
    }

    TrajectoryModel model;
    model.kind = TrajectoryKind::tree;
    model.vertices = std::move(km.centers);
    build_skeleton(model, std::move(edges), root);
    return model;
}

Location locate(const TrajectoryModel& model, std::span<const double> point) {
    if (static_cast<Eigen::Index>(point.size()) != model.vertices.cols()) {
        throw ValidationError("point dimension does not match the trajectory");
    }
    Eigen::Map<const Eigen::RowVectorXd> p(point.data(), static_cast<Eigen::Index>(point.size()));
    Location best;
    best.squared_distance = std::numeric_limits<double>::infinity();
    for (int e = 0; e < static_cast<int>(model.edges.size()); ++e) {
        auto [a, b] = model.edges[e];
        Eigen::RowVectorXd start = model.vertices.row(a);
        Eigen::RowVectorXd ab = model.vertices.row(b) - start;
        double len2 = ab.squaredNorm();
        double t = len2 > 0.0 ? std::clamp((p - start).dot(ab) / len2, 0.0, 1.0) : 0.0;
        double d2 = (p - (start + t * ab)).squaredNorm();
        if (d2 < best.squared_distance) {
            best.squared_distance = d2;
            best.edge = e;
            best.branch = model.edge_branch[e];
            best.arclength = model.arclength[a] + t * std::sqrt(len2);
        }
    }
    return best;
}

}  // namespace timely::pseudotime
