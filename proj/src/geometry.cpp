#include "timely/geometry.hpp"

#include "timely/kernels.hpp"

namespace timely {

Eigen::MatrixXd pairwise_squared_distances(const RowMatrix& points) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double v = kernels::squared_distance(row_span(points, i), row_span(points, j));
            d2(i, j) = v;
            d2(j, i) = v;
        }
    }
    return d2;
}

}  // namespace timely
