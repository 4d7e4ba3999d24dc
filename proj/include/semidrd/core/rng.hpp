#pragma once

#include <cmath>
#include <cstdint>

namespace semidrd {

/// Deterministic 64-bit generator (splitmix64 core). We roll our own instead
/// of <random> adapters because distribution outputs must be reproducible
/// bit-for-bit across runs and serializable into checkpoints; the standard
/// distributions make no such guarantee.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) { return next_u64() % n; }

    /// Standard normal via Box-Muller (no cached spare: keeps state trivial).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    /// Derive an independent stream from (seed, tag...). Used for per-epoch /
    /// per-step streams so that resuming mid-run needs no carried RNG state.
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t x = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
        Rng r(x);
        return r.next_u64();
    }
    static uint64_t mix(uint64_t a, uint64_t b, uint64_t c) { return mix(mix(a, b), c); }

private:
    uint64_t state_;
};

}  // namespace semidrd
