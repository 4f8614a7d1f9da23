#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ptpmx {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Seed for the idx-th independent substream of a base seed. Used for
// per-worker / per-trial / per-batch streams so that results do not
// depend on scheduling.
inline uint64_t substream_seed(uint64_t base, uint64_t idx) {
    return splitmix64(base ^ splitmix64(idx + 1));
}

// Deterministic random stream. Distributions are implemented by hand on
// top of mt19937_64 so the draw sequence is fixed by the seed alone, not
// by the standard library's distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(splitmix64(seed)) {}

    static Rng substream(uint64_t base, uint64_t idx) {
        return Rng(substream_seed(base, idx));
    }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Exponential with the given mean; mean 0 collapses to 0.
    double exponential(double mean) {
        return mean <= 0.0 ? 0.0 : -mean * std::log1p(-uniform01());
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace ptpmx
