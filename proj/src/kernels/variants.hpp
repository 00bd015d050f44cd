#ifndef TIMELY_KERNELS_VARIANTS_HPP
#define TIMELY_KERNELS_VARIANTS_HPP

#include <cstddef>

namespace timely::kernels::detail {

double squared_distance_scalar(const double* a, const double* b, std::size_t n);

#if defined(__x86_64__) || defined(__i386__)
#define TIMELY_HAVE_AVX2_KERNELS 1
double squared_distance_avx2(const double* a, const double* b, std::size_t n);
#endif

#if defined(__aarch64__)
#define TIMELY_HAVE_NEON_KERNELS 1
double squared_distance_neon(const double* a, const double* b, std::size_t n);
#endif

}  // namespace timely::kernels::detail

#endif
