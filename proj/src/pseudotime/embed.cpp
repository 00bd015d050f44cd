#include "timely/pseudotime.hpp"

#include "timely/geometry.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <vector>

namespace timely::pseudotime {

namespace {

void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (std::abs(v(i)) > std::abs(v(best))) {
            best = i;
        }
    }
    if (v(best) < 0.0) {
        v = -v;
    }
}

Embedding classical_mds(const RowMatrix& features, int dims) {
    const Eigen::Index n = features.rows();
    Eigen::MatrixXd d2 = pairwise_squared_distances(features);

    // B = -1/2 J D2 J with J the centring matrix.
    Eigen::VectorXd row_mean = d2.rowwise().mean();
    double grand_mean = row_mean.mean();
    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            gram(i, j) = -0.5 * (d2(i, j) - row_mean(i) - row_mean(j) + grand_mean);
        }
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) {
        throw DegenerateError("MDS eigendecomposition failed");
    }
    const Eigen::VectorXd& values = solver.eigenvalues();
    const double top = values(n - 1);
    if (!(top > 1e-12 * std::max(1.0, gram.diagonal().cwiseAbs().maxCoeff())) || top <= 0.0) {
        throw DegenerateError("MDS: all points coincide");
    }

    Embedding out;
    out.method = EmbedMethod::mds;
    out.coords.resize(n, dims);
    for (int c = 0; c < dims; ++c) {
        Eigen::VectorXd v = solver.eigenvectors().col(n - 1 - c);
        fix_sign(v);
        double lambda = std::max(0.0, values(n - 1 - c));
        out.coords.col(c) = v * std::sqrt(lambda);
    }
    return out;
}

Embedding diffusion_map(const RowMatrix& features, int dims, std::optional<double> bandwidth) {
    const Eigen::Index n = features.rows();
    Eigen::MatrixXd d2 = pairwise_squared_distances(features);

    double h = 0.0;
    if (bandwidth) {
        h = *bandwidth;
        if (!(h > 0.0) || !std::isfinite(h)) {
            throw ValidationError("diffusion bandwidth must be positive");
        }
    } else {
        std::vector<double> dist;
        dist.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                dist.push_back(std::sqrt(d2(i, j)));
            }
        }
        auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
        std::nth_element(dist.begin(), mid, dist.end());
        h = *mid;
        if (dist.size() % 2 == 0) {
            double lower = *std::max_element(dist.begin(), mid);
            h = 0.5 * (h + lower);
        }
        if (!(h > 0.0)) {
            double far = *std::max_element(dist.begin(), dist.end());
            if (!(far > 0.0)) {
                throw DegenerateError("diffusion map: all points coincide");
            }
            h = far;
        }
    }

    Eigen::MatrixXd kernel = (-d2 / (2.0 * h * h)).array().exp().matrix();
    Eigen::VectorXd degree = kernel.rowwise().sum();
    Eigen::VectorXd inv_sqrt = degree.array().rsqrt().matrix();
    Eigen::MatrixXd sym = inv_sqrt.asDiagonal() * kernel * inv_sqrt.asDiagonal();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw DegenerateError("diffusion map eigendecomposition failed");
    }
    const Eigen::VectorXd& values = solver.eigenvalues();
    if (values(n - 2) >= 1.0 - 1e-12) {
        throw DegenerateError("diffusion map: kernel has no nontrivial spectrum (points coincide)");
    }

    // Right eigenvectors of D^-1 K are D^-1/2 v; scaled so the trivial one is all ones.
    const double total = std::sqrt(degree.sum());
    Embedding out;
    out.method = EmbedMethod::diffusion_map;
    out.bandwidth = h;
    out.coords.resize(n, dims);
    for (int c = 0; c < dims; ++c) {
        Eigen::VectorXd psi = inv_sqrt.cwiseProduct(solver.eigenvectors().col(n - 2 - c)) * total;
        fix_sign(psi);
        out.coords.col(c) = psi * values(n - 2 - c);
    }
    return out;
}

}  // namespace

Embedding embed(const RowMatrix& features, EmbedMethod method, int dims, std::optional<double> bandwidth) {
    if (dims < 1) {
        throw ValidationError("embedding dimension must be at least 1");
    }
    if (features.cols() < 1) {
        throw ValidationError("features must have at least one column");
    }
    if (features.rows() < dims + 1 || (method == EmbedMethod::diffusion_map && features.rows() < dims + 2)) {
        throw ValidationError("too few points for the requested embedding dimension");
    }
    if (!features.allFinite()) {
        throw ValidationError("features contain non-finite values");
    }
    return method == EmbedMethod::mds ? classical_mds(features, dims) : diffusion_map(features, dims, bandwidth);
}

}  // namespace timely::pseudotime
