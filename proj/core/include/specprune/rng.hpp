#pragma once

#include <cmath>
#include <cstdint>

namespace specprune {

// splitmix64, used to expand a user seed into generator state.
inline std::uint64_t splitmix64(std::uint64_t & state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// xoshiro256** by Blackman & Vigna. Platform-stable: the output stream for a
// given seed is part of the experiment interface, so synthetic ensembles are
// reproducible across machines and languages.
class Xoshiro256ss {
public:
    explicit Xoshiro256ss(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto & word : state_) {
            word = splitmix64(sm);
        }
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on (0, 1]: 53-bit mantissa, shifted so 0 is excluded.
    double uniform01() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Marsaglia polar method; deterministic given the seed.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next() % n; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace specprune
