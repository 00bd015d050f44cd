#include "timely/kernels.hpp"

#include "variants.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace timely::kernels {

namespace {

using DistanceFn = double (*)(const double*, const double*, std::size_t);

DistanceFn resolve(Isa isa) {
    switch (isa) {
    case Isa::scalar:
        return detail::squared_distance_scalar;
    case Isa::avx2:
#ifdef TIMELY_HAVE_AVX2_KERNELS
        return detail::squared_distance_avx2;
#else
        break;
#endif
    case Isa::neon:
#ifdef TIMELY_HAVE_NEON_KERNELS
        return detail::squared_distance_neon;
#else
        break;
#endif
    }
    throw std::invalid_argument("kernel variant '" + std::string(name(isa)) + "' is not built for this target");
}

Isa initial_choice() {
    if (const char* env = std::getenv("TIMELY_KERNELS")) {
        std::string_view want(env);
        for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
            if (want == name(isa) && supported(isa)) {
                return isa;
            }
        }
    }
    return best_supported();
}

struct State {
    std::atomic<Isa> isa;
    std::atomic<DistanceFn> fn;
    State() : isa(initial_choice()), fn(resolve(isa.load())) {}
};

State& state() {
    static State s;
    return s;
}

void check_shapes(std::span<const double> query, std::span<const double> rows, std::span<double> out) {
    if (rows.size() != query.size() * out.size()) {
        throw std::invalid_argument("squared_distances: block size does not match query and output");
    }
}

}  // namespace

std::string_view name(Isa isa) {
    switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
    }
    return "unknown";
}

bool supported(Isa isa) {
    switch (isa) {
    case Isa::scalar:
        return true;
    case Isa::avx2:
#ifdef TIMELY_HAVE_AVX2_KERNELS
        return __builtin_cpu_supports("avx2");
#else
        return false;
#endif
    case Isa::neon:
#ifdef TIMELY_HAVE_NEON_KERNELS
        return true;
#else
        return false;
#endif
    }
    return false;
}

Isa best_supported() {
    if (supported(Isa::avx2)) return Isa::avx2;
    if (supported(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

Isa active() { return state().isa.load(); }

void select(Isa isa) {
    if (!supported(isa)) {
        throw std::invalid_argument("kernel variant '" + std::string(name(isa)) + "' is not supported on this CPU");
    }
    state().fn.store(resolve(isa));
    state().isa.store(isa);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("squared_distance: length mismatch");
    }
    return state().fn.load()(a.data(), b.data(), a.size());
}

double squared_distance(Isa isa, std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("squared_distance: length mismatch");
    }
    if (!supported(isa)) {
        throw std::invalid_argument("kernel variant not supported on this CPU");
    }
    return resolve(isa)(a.data(), b.data(), a.size());
}

void squared_distances(std::span<const double> query, std::span<const double> rows, std::span<double> out) {
    check_shapes(query, rows, out);
    DistanceFn fn = state().fn.load();
    const std::size_t d = query.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = fn(query.data(), rows.data() + i * d, d);
    }
}

void squared_distances(Isa isa, std::span<const double> query, std::span<const double> rows, std::span<double> out) {
    check_shapes(query, rows, out);
    if (!supported(isa)) {
        throw std::invalid_argument("kernel variant not supported on this CPU");
    }
    DistanceFn fn = resolve(isa);
    const std::size_t d = query.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = fn(query.data(), rows.data() + i * d, d);
    }
}

}  // namespace timely::kernels
