#pragma once

#include <cstdint>
#include <cmath>

namespace pri4r {

// PCG32 (O'Neill, pcg-random.org, XSH-RR variant). Chosen for portability:
// the same seed yields the same stream on every platform, which all
// determinism guarantees in this project lean on.
class Pcg32 {
public:
    explicit Pcg32(uint64_t seed = 0x853c49e6748fea9bULL, uint64_t stream = 0xda3e39cb94b95bdbULL) {
        state_ = 0u;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // uniform in [0, 1)
    double uniform() {
        uint64_t hi = next_u32();
        uint64_t lo = next_u32();
        uint64_t bits = (hi << 21) | (lo & ((1ULL << 21) - 1));  // 53 random bits
        return static_cast<double>(bits & ((1ULL << 53) - 1)) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; one value per call, no caching so the
    // stream position stays easy to reason about
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // uniform integer in [0, n)
    uint32_t below(uint32_t n) {
        // Lemire-style rejection to avoid modulo bias
        uint64_t m = static_cast<uint64_t>(next_u32()) * n;
        uint32_t l = static_cast<uint32_t>(m);
        if (l < n) {
            uint32_t t = (-n) % n;
            while (l < t) {
                m = static_cast<uint64_t>(next_u32()) * n;
                l = static_cast<uint32_t>(m);
            }
        }
        return static_cast<uint32_t>(m >> 32);
    }

private:
    uint64_t state_;
    uint64_t inc_;
};

}  // namespace pri4r
