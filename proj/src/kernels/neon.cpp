#include "variants.hpp"

#ifdef TIMELY_HAVE_NEON_KERNELS

#include <arm_neon.h>

namespace timely::kernels::detail {

// Two 2-wide accumulators hold lanes {0, 1} and {2, 3}.
double squared_distance_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t lo = vdupq_n_f64(0.0);
    float64x2_t hi = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float64x2_t d0 = vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
        float64x2_t d1 = vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
        lo = vaddq_f64(lo, vmulq_f64(d0, d0));
        hi = vaddq_f64(hi, vmulq_f64(d1, d1));
    }
    double lanes[4];
    vst1q_f64(lanes, lo);
    vst1q_f64(lanes + 2, hi);
    for (std::size_t j = 0; i < n; ++i, ++j) {
        double d = a[i] - b[i];
        lanes[j] += d * d;
    }
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace timely::kernels::detail

#endif
