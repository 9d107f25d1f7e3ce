#pragma once

#include <cstdint>
#include <initializer_list>

namespace shieldkit {

/// Counter-splittable pseudo random generator (splitmix64 core).
///
/// Every stochastic code path seeds a fresh Rng from a structural key
/// (seed, cell, action, sample, ...) instead of sharing one stream, so
/// results do not depend on iteration order or thread schedule.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    /// splitmix64 finalizer; full avalanche, used for key mixing.
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
        h ^= v + 0x9E3779B97F4A7C15ull + (h << 12) + (h >> 4);
        return mix(h);
    }

    /// Deterministically derive a child generator from a key path.
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t h = mix(seed ^ 0xA0761D6478BD642Full);
        for (std::uint64_t part : path) h = combine(h, part);
        return Rng(h);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix(state_);
    }

    /// Uniform draw from [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform draw from [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer from [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    std::uint64_t state_;
};

} // namespace shieldkit
