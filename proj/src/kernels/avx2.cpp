#include "variants.hpp"

#ifdef TIMELY_HAVE_AVX2_KERNELS

#include <immintrin.h>

namespace timely::kernels::detail {

__attribute__((target("avx2"))) double squared_distance_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    for (std::size_t j = 0; i < n; ++i, ++j) {
        double d = a[i] - b[i];
        lanes[j] += d * d;
    }
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace timely::kernels::detail

#endif
