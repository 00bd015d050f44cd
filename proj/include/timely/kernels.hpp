#ifndef TIMELY_KERNELS_HPP
#define TIMELY_KERNELS_HPP

#include <cstddef>
#include <span>
#include <string_view>

/**
 * @file kernels.hpp
 *
 * @brief Distance kernels with a scalar reference and SIMD variants.
 *
 * Every variant accumulates squared differences into four lanes (element i
 * goes to lane i % 4) and combines them as (l0 + l1) + (l2 + l3), so all
 * variants return bit-identical results. The active variant is picked once
 * from the CPU; the environment variable `TIMELY_KERNELS` (scalar, avx2, neon)
 * overrides it.
 */

namespace timely::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view name(Isa isa);
bool supported(Isa isa);
Isa best_supported();
Isa active();

/// @throws std::invalid_argument if `isa` is not supported on this CPU.
void select(Isa isa);

double squared_distance(std::span<const double> a, std::span<const double> b);
double squared_distance(Isa isa, std::span<const double> a, std::span<const double> b);

/**
 * Squared distance from `query` to each row of the row-major block `rows`
 * (`out.size()` rows of `query.size()` values).
 */
void squared_distances(std::span<const double> query, std::span<const double> rows, std::span<double> out);
void squared_distances(Isa isa, std::span<const double> query, std::span<const double> rows, std::span<double> out);

}  // namespace timely::kernels

#endif
