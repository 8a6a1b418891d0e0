#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "asymfusion/tensor.hpp"

namespace asymfusion {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014). Used to scramble seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Portable 64-bit linear congruential generator.
///
///   state <- state * 6364136223846793005 + 1442695040888963407  (mod 2^64)
///
/// The initial state is splitmix64(seed). uniform() uses the top 53 bits of
/// the advanced state; normal() is Box-Muller on two uniforms (cosine branch
/// only, so every normal draw consumes exactly two steps). The sequence is
/// identical on every platform.
class Lcg64 {
  public:
    static constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;
    static constexpr std::uint64_t kIncrement = 1442695040888963407ULL;

    explicit Lcg64(std::uint64_t seed) : state_(splitmix64(seed)) {}

    std::uint64_t next() {
        state_ = state_ * kMultiplier + kIncrement;
        return state_;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    int uniform_int(int n) { return static_cast<int>(uniform() * n); }

    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t state() const { return state_; }

  private:
    std::uint64_t state_;
};

inline Tensor random_normal(Shape shape, Lcg64& rng, double stddev = 1.0) {
    Tensor t(shape);
    for (double& v : t.data()) v = stddev * rng.normal();
    return t;
}

inline Tensor random_uniform(Shape shape, Lcg64& rng, double lo, double hi) {
    Tensor t(shape);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace asymfusion
