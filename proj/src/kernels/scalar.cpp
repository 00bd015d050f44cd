#include "variants.hpp"

namespace timely::kernels::detail {

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
    double lanes[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        for (std::size_t j = 0; j < 4; ++j) {
            double d = a[i + j] - b[i + j];
            lanes[j] += d * d;
        }
    }
    for (std::size_t j = 0; i < n; ++i, ++j) {
        double d = a[i] - b[i];
        lanes[j] += d * d;
    }
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace timely::kernels::detail
