#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace hadamix {

// Seedable RNG with hand-rolled float draws. Distributions are implemented
// here rather than via <random> adaptors so that draw sequences are pinned by
// this file alone; serializes to text for bit-exact checkpoint resume.
class Rng {
public:
    Rng() : eng_(0) {}
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi] via rejection-free scaling (bias negligible
    // for the ranges used here and fully deterministic).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + int64_t(uniform() * double(hi - lo + 1));
    }

    // Box-Muller, two uniforms per draw, no cached spare.
    float normal(float mean = 0.0f, float stddev = 1.0f) {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return float(mean + stddev * z);
    }

    std::string serialize() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void deserialize(const std::string& text) {
        std::istringstream is(text);
        is >> eng_;
    }

private:
    std::mt19937_64 eng_;
};

// Cheap seed mixer for deriving independent streams (eval draws, corpus
// synthesis) from one user seed.
inline uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace hadamix
