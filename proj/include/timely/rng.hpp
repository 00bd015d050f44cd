#ifndef TIMELY_RNG_HPP
#define TIMELY_RNG_HPP

#include <cstddef>
#include <cstdint>
#include <random>

namespace timely {

/**
 * @brief Portable random stream.
 *
 * Raw 64-bit words come from `std::mt19937_64`, whose output sequence is fixed
 * by the standard. The derived draws below are written out by hand because
 * the standard distributions are implementation-defined:
 *
 * - `uniform()` takes the top 53 bits of one word: `(w >> 11) * 2^-53`.
 * - `below(n)` rejects words at or above the largest multiple of `n`, then
 *   returns `w % n`.
 * - `normal()` uses Marsaglia's polar method on pairs of `uniform()` draws and
 *   returns the two variates of an accepted pair in order.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform();
    std::size_t below(std::size_t n);
    double normal();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace timely

#endif
