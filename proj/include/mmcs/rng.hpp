#pragma once

#include <cstdint>

namespace mmcs {

// 64-bit linear congruential generator with the MMIX constants
//   state <- state * 6364136223846793005 + 1442695040888963407  (mod 2^64)
// The algorithm is spelled out so that a corpus generated from a given seed
// can be reproduced exactly by any other implementation.
class Lcg64 {
public:
    explicit Lcg64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
        return state_;
    }

    // Uniform in [0,1) from the top 53 bits (the low bits of an LCG are weak).
    double uniform() {
        return static_cast<double>(next() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0,n) via the multiply-shift reduction, which keys
    // off the high bits.
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    bool coin(double p) { return uniform() < p; }

private:
    uint64_t state_;
};

} // namespace mmcs
