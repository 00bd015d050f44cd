#include "doctest.h"

#include "timely/kernels.hpp"
#include "timely/rng.hpp"

#include <cstring>
#include <stdexcept>
#include <vector>

using namespace timely;

namespace {

double naive(const std::vector<double>& a, const std::vector<double>& b) {
    double lanes[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        lanes[i % 4] += d * d;
    }
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

bool same_bits(double x, double y) { return std::memcmp(&x, &y, sizeof x) == 0; }

}  // namespace

TEST_CASE("every supported variant matches the scalar reference bit for bit") {
    Rng rng(11);
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 50u, 101u}) {
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> a(n), b(n);
            for (auto& x : a) x = rng.normal() * std::pow(10.0, rng.below(7) - 3.0);
            for (auto& x : b) x = rng.normal();
            const double ref = kernels::squared_distance(kernels::Isa::scalar, a, b);
            CHECK(same_bits(ref, naive(a, b)));
            for (auto isa : {kernels::Isa::avx2, kernels::Isa::neon}) {
                if (!kernels::supported(isa)) continue;
                CAPTURE(kernels::name(isa));
                CHECK(same_bits(kernels::squared_distance(isa, a, b), ref));
            }
        }
    }
}

TEST_CASE("batched distances agree across variants") {
    Rng rng(5);
    const std::size_t d = 13, rows = 9;
    std::vector<double> q(d), block(d * rows);
    for (auto& x : q) x = rng.normal();
    for (auto& x : block) x = rng.normal();
    std::vector<double> ref(rows), got(rows);
    kernels::squared_distances(kernels::Isa::scalar, q, block, ref);
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> row(block.begin() + r * d, block.begin() + (r + 1) * d);
        CHECK(same_bits(ref[r], naive(q, row)));
    }
    for (auto isa : {kernels::Isa::avx2, kernels::Isa::neon}) {
        if (!kernels::supported(isa)) continue;
        kernels::squared_distances(isa, q, block, got);
        for (std::size_t r = 0; r < rows; ++r) CHECK(same_bits(got[r], ref[r]));
    }
}

TEST_CASE("runtime selection") {
    CHECK(kernels::supported(kernels::Isa::scalar));
    const auto before = kernels::active();
    kernels::select(kernels::Isa::scalar);
    CHECK(kernels::active() == kernels::Isa::scalar);
    kernels::select(before);
    for (auto isa : {kernels::Isa::avx2, kernels::Isa::neon}) {
        if (!kernels::supported(isa)) CHECK_THROWS_AS(kernels::select(isa), std::invalid_argument);
    }
}
