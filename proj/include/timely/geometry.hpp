#ifndef TIMELY_GEOMETRY_HPP
#define TIMELY_GEOMETRY_HPP

#include "timely/core.hpp"

#include <span>

namespace timely {

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

/// Symmetric matrix of squared Euclidean distances between rows.
Eigen::MatrixXd pairwise_squared_distances(const RowMatrix& points);

}  // namespace timely

#endif
