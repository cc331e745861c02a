#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace itm {

namespace detail {

// splitmix64 step; used to derive well-separated child seeds.
inline std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace detail

// Seedable, splittable random source. Every stochastic operation in the
// toolkit takes one of these explicitly so full pipelines replay
// bit-identically. Distributions are implemented here rather than taken
// from <random> so the draw sequence is pinned independent of the
// standard library vendor.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    std::uint64_t seed() const { return seed_; }

    // Independent child stream. Depends only on (seed, stream), not on
    // how far this generator has advanced, so per-sample streams can be
    // assigned independent of scheduling.
    Rng fork(std::uint64_t stream) const {
        std::uint64_t s = seed_ ^ (0xA0761D6478BD642Full + stream);
        std::uint64_t child = detail::splitmix64(s);
        // one extra mix so fork(0) != seed
        return Rng(detail::splitmix64(child));
    }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller, cosine branch only. Exactly two uniforms per call and
    // no cached state, so replay does not depend on call history.
    double normal(double mean, double stddev) {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

}  // namespace itm
