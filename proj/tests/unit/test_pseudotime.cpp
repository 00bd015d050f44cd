#include "doctest.h"

#include "timely/eval.hpp"
#include "timely/geometry.hpp"
#include "timely/pipeline.hpp"
#include "timely/pseudotime.hpp"
#include "timely/rng.hpp"
#include "timely/simulate.hpp"

#include <Eigen/Eigenvalues>

#include <numbers>
#include <set>

using namespace timely;
using namespace timely::pseudotime;

namespace {

std::vector<CellRecord> cells_with_labels(const std::vector<int>& labels) {
    std::vector<CellRecord> cells;
    for (std::size_t i = 0; i < labels.size(); ++i) cells.push_back({"c" + std::to_string(i), {0.0}, labels[i], ""});
    return cells;
}

Embedding as_embedding(RowMatrix coords) {
    Embedding e;
    e.coords = std::move(coords);
    return e;
}

std::vector<int> degrees(const TrajectoryModel& m) {
    std::vector<int> d(static_cast<std::size_t>(m.vertices.rows()), 0);
    for (auto [a, b] : m.edges) {
        ++d[a];
        ++d[b];
    }
    return d;
}

// Kruskal with a plain union-find.
std::set<std::pair<int, int>> kruskal(const RowMatrix& pts) {
    const int n = static_cast<int>(pts.rows());
    std::vector<std::tuple<double, int, int>> all;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) all.emplace_back((pts.row(i) - pts.row(j)).norm(), i, j);
    std::sort(all.begin(), all.end());
    std::vector<int> up(n);
    std::iota(up.begin(), up.end(), 0);
    std::function<int(int)> find = [&](int x) { return up[x] == x ? x : up[x] = find(up[x]); };
    std::set<std::pair<int, int>> out;
    for (auto [d, i, j] : all) {
        if (find(i) != find(j)) {
            up[find(i)] = find(j);
            out.emplace(i, j);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("mds reproduces native 2-D distances") {
    Rng rng(1);
    RowMatrix pts(30, 2);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = rng.normal() * 3.0;
    auto e = embed(pts, EmbedMethod::mds, 2);
    auto d0 = pairwise_squared_distances(pts);
    auto d1 = pairwise_squared_distances(e.coords);
    CHECK((d0.cwiseSqrt() - d1.cwiseSqrt()).cwiseAbs().maxCoeff() < 1e-8);

    // Rigid motion of the input leaves the embedding distances alone.
    const double c = std::cos(0.7), s = std::sin(0.7);
    RowMatrix moved(30, 2);
    for (int i = 0; i < 30; ++i) {
        moved(i, 0) = c * pts(i, 0) - s * pts(i, 1) + 5.0;
        moved(i, 1) = s * pts(i, 0) + c * pts(i, 1) - 2.0;
    }
    auto e2 = embed(moved, EmbedMethod::mds, 2);
    CHECK((pairwise_squared_distances(e2.coords) - d1).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("diffusion map against a dense general eigensolver") {
    Rng rng(2);
    const int n = 40;
    RowMatrix pts(n, 3);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) pts(i, j) = rng.normal() * 0.3 + (i < n / 2 ? 0.0 : 4.0);
    auto e = embed(pts, EmbedMethod::diffusion_map, 1, 2.0);
    CHECK(e.bandwidth == 2.0);

    Eigen::MatrixXd k(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) k(i, j) = std::exp(-(pts.row(i) - pts.row(j)).squaredNorm() / 8.0);
    Eigen::VectorXd deg = k.rowwise().sum();
    Eigen::MatrixXd p = deg.cwiseInverse().asDiagonal() * k;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(p);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return solver.eigenvalues()(a).real() > solver.eigenvalues()(b).real(); });
    const double lambda = solver.eigenvalues()(order[1]).real();
    Eigen::VectorXd psi = solver.eigenvectors().col(order[1]).real();
    psi *= std::sqrt(deg.sum() / deg.dot(psi.cwiseAbs2()));
    Eigen::Index arg;
    psi.cwiseAbs().maxCoeff(&arg);
    if (psi(arg) < 0) psi = -psi;
    psi *= lambda;
    CHECK((e.coords.col(0) - psi).cwiseAbs().maxCoeff() < 1e-8);

    for (int i = 0; i < n; ++i) CHECK(((e.coords(i, 0) > 0) == (e.coords(0, 0) > 0)) == (i < n / 2));
}

TEST_CASE("embedding rejects coincident points") {
    RowMatrix same = RowMatrix::Ones(3, 4);
    CHECK_THROWS_AS(embed(same, EmbedMethod::mds, 1), DegenerateError);
    CHECK_THROWS_AS(embed(RowMatrix::Ones(4, 4), EmbedMethod::diffusion_map, 1), DegenerateError);
}

TEST_CASE("principal curve on an exact segment") {
    const int n = 60;
    RowMatrix pts(n, 2);
    for (int i = 0; i < n; ++i) {
        double t = i / (n - 1.0);
        pts(i, 0) = 1.0 + 3.0 * t;
        pts(i, 1) = -2.0 + 1.0 * t;
    }
    auto e = as_embedding(pts);
    CurveOptions opts;
    opts.n_clusters = 3;
    auto model = fit_curve(e, opts);
    const Eigen::RowVector2d dir = Eigen::RowVector2d(3.0, 1.0).normalized();
    for (Eigen::Index v = 0; v < model.vertices.rows(); ++v) {
        Eigen::RowVector2d r = model.vertices.row(v) - Eigen::RowVector2d(1.0, -2.0);
        CHECK(std::abs(r(0) * dir(1) - r(1) * dir(0)) < 1e-6);
    }
    auto topo = chain_topology(2);
    std::vector<int> labels(n, 1);
    for (int i = 0; i < n / 3; ++i) labels[i] = 0;
    auto ordered = project(e, model, topo, cells_with_labels(labels));
    for (int i = 0; i < n; ++i) CHECK(ordered.source_index[i] == static_cast<std::size_t>(i));
}

TEST_CASE("two clusters give a segment between their centroids") {
    Rng rng(3);
    RowMatrix pts(40, 2);
    for (int i = 0; i < 40; ++i) {
        pts(i, 0) = rng.normal() * 0.1 + (i < 20 ? 0.0 : 5.0);
        pts(i, 1) = rng.normal() * 0.1;
    }
    CurveOptions opts;
    opts.n_clusters = 2;
    opts.max_iter = 0;
    auto model = fit_curve(as_embedding(pts), opts);
    Eigen::RowVectorXd a = pts.topRows(20).colwise().mean(), b = pts.bottomRows(20).colwise().mean();
    Eigen::RowVectorXd first = model.vertices.row(0), last = model.vertices.row(model.vertices.rows() - 1);
    CHECK(std::min((first - a).norm() + (last - b).norm(), (first - b).norm() + (last - a).norm()) < 1e-12);
}

TEST_CASE("noisy S-curve recovers the generating parameter") {
    Rng rng(4);
    const int n = 200;
    RowMatrix pts(n, 2);
    std::vector<double> truth(n);
    for (int i = 0; i < n; ++i) {
        double t = rng.uniform();
        truth[i] = t;
        double a = 1.5 * std::numbers::pi * (2.0 * t - 1.0);
        pts(i, 0) = std::sin(a) + rng.normal() * 0.02;
        pts(i, 1) = (a >= 0 ? 1.0 : -1.0) * (1.0 - std::cos(a)) + rng.normal() * 0.02;
    }
    CurveOptions opts;
    opts.n_clusters = 10;
    auto e = as_embedding(pts);
    auto model = fit_curve(e, opts);
    std::vector<int> labels(n, 1);
    for (int i = 0; i < n; ++i) labels[i] = truth[i] < 0.2 ? 0 : 1;
    auto ordered = project(e, model, chain_topology(2), cells_with_labels(labels));
    std::vector<double> fitted(n), gen(n);
    for (int i = 0; i < n; ++i) {
        fitted[i] = ordered.pseudotime[i];
        gen[i] = truth[ordered.source_index[i]];
    }
    CHECK(eval::spearman(fitted, gen) >= 0.99);
}

TEST_CASE("tree skeletons") {
    SUBCASE("Y shape has one branch point and is the minimum spanning tree") {
        Rng rng(5);
        std::vector<Eigen::RowVector2d> blobs{{0, 0}};
        for (double angle : {90.0, 210.0, 330.0}) {
            Eigen::RowVector2d u(std::cos(angle * std::numbers::pi / 180), std::sin(angle * std::numbers::pi / 180));
            for (int s = 1; s <= 3; ++s) blobs.push_back(u * s);
        }
        const int per = 15;
        RowMatrix pts(static_cast<Eigen::Index>(blobs.size()) * per, 2);
        std::vector<int> labels;
        for (std::size_t b = 0; b < blobs.size(); ++b) {
            for (int i = 0; i < per; ++i) {
                pts.row(static_cast<Eigen::Index>(b) * per + i) =
                    blobs[b] + Eigen::RowVector2d(rng.normal(), rng.normal()) * 0.05;
                labels.push_back(b == 3 ? 0 : 1);
            }
        }
        auto model = fit_tree(as_embedding(pts), static_cast<int>(blobs.size()), 0, chain_topology(2), labels);
        auto deg = degrees(model);
        CHECK(std::count(deg.begin(), deg.end(), 3) == 1);
        CHECK(std::count(deg.begin(), deg.end(), 1) == 3);
        std::set<std::pair<int, int>> got;
        for (auto [a, b] : model.edges) got.emplace(std::min(a, b), std::max(a, b));
        CHECK(got == kruskal(model.vertices));
        CHECK((model.vertices.row(model.root) - blobs[3]).norm() < 0.1);
        CHECK(model.branches.size() == 3);
    }
    SUBCASE("collinear clusters give a path") {
        Rng rng(6);
        RowMatrix pts(50, 2);
        for (int i = 0; i < 50; ++i) pts.row(i) << (i / 10) * 2.0 + rng.normal() * 0.05, rng.normal() * 0.05;
        std::vector<int> labels(50, 1);
        for (int i = 0; i < 10; ++i) labels[i] = 0;
        auto model = fit_tree(as_embedding(pts), 5, 1, chain_topology(2), labels);
        auto deg = degrees(model);
        CHECK(*std::max_element(deg.begin(), deg.end()) <= 2);
        CHECK(model.branches.size() == 1);
    }
    SUBCASE("two clusters give one edge") {
        RowMatrix pts(6, 2);
        pts << 0, 0, 0.1, 0, 0, 0.1, 5, 5, 5.1, 5, 5, 5.1;
        auto model = fit_tree(as_embedding(pts), 2, 0, chain_topology(2), std::vector<int>{0, 0, 0, 1, 1, 1});
        CHECK(model.edges.size() == 1);
    }
}

TEST_CASE("projection ordering, normalisation and orientation") {
    const int n = 50;
    RowMatrix pts(n, 2);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        pts.row(i) << i * 0.1, 0.0;
        labels[i] = i >= 40 ? 0 : 1;  // root-state cells at the high end
    }
    auto e = as_embedding(pts);
    RowMatrix ends(2, 2);
    ends << -0.1, 0.0, 5.0, 0.0;
    auto model = path_model(ends);  // root vertex sits at the non-root end
    auto ordered = project(e, model, chain_topology(2), cells_with_labels(labels));
    CHECK(ordered.pseudotime.front() == 0.0);
    CHECK(ordered.pseudotime.back() == 1.0);
    CHECK(ordered.source_index.front() == static_cast<std::size_t>(n - 1));
    CHECK(ordered.predecessor[0] == -1);
    for (std::size_t t = 1; t < ordered.size(); ++t) {
        CHECK(ordered.pseudotime[t] > ordered.pseudotime[t - 1]);
        CHECK(ordered.y[t] > 0.0);
        CHECK(ordered.y[t] == ordered.pseudotime[t] - ordered.pseudotime[ordered.predecessor[t]]);
    }
}

TEST_CASE("labelling new cells from borders") {
    RowMatrix v(2, 2);
    v << 0, 0, 2, 0;
    auto model = path_model(v);
    ConsistencyReport report;
    report.states = {"A", "B", "C"};
    report.cells = {{"a", 0, 0, false, 0.0, 0, ""}, {"b", 1, 1, false, 0.6, 0, ""}, {"c", 2, 2, false, 1.0, 0, ""}};
    report.borders = {{0, 0, 1, 0.5}, {0, 1, 2, 0.8}};
    RowMatrix q(6, 2);
    q << 0, 0, 0.25, 0.3, 0.5, 0, 0.79, -1, 0.8, 0, 1.5, 0;
    auto got = project_new(model, report, q);
    REQUIRE(got.size() == 6);
    std::vector<int> labels;
    for (auto& g : got) labels.push_back(g.label);
    CHECK(labels == std::vector<int>{0, 0, 1, 1, 2, 2});
    CHECK_FALSE(got[0].clamped);
    CHECK(got[5].clamped);
    CHECK(got[5].pseudotime == 1.0);
}

TEST_CASE("new cells on a fitted granulopoiesis report follow the border intervals") {
    auto ds = simulate::generate({250, 5, 50, 10, 12});
    auto topo = chain_topology(5);
    auto res = run_pipeline_detailed(ds.cells, topo, granulopoiesis_emission(), default_params(topo, granulopoiesis_emission()).pi);
    const auto& borders = res.report.borders;
    REQUIRE(borders.size() >= 2);
    int checked = 0;
    for (std::size_t i = 0; i < res.ordered.size(); ++i) {
        const double pt = res.ordered.pseudotime[i];
        int expect = borders.front().from_state;
        for (const auto& b : borders)
            if (pt >= b.pseudotime) expect = b.to_state;
        RowMatrix q = res.embedding.coords.row(static_cast<Eigen::Index>(res.ordered.source_index[i]));
        auto got = project_new(res.model, res.report, q);
        CHECK(got[0].pseudotime == doctest::Approx(pt).epsilon(1e-12));
        CHECK(got[0].label == expect);
        ++checked;
    }
    CHECK(checked == 250);
}
