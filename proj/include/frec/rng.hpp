#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace frec {

// Deterministic 64-bit generator (splitmix64). All randomness in the project
// flows from one root seed via named sub-streams so that runs are reproducible
// bit-for-bit and ablations share initialization.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling keeps it exactly uniform.
    std::uint64_t index(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t limit = ~0ULL - (~0ULL % n);
        std::uint64_t v;
        do { v = next(); } while (v >= limit);
        return v % n;
    }

    // n distinct indices from [0, universe), order of selection.
    std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n, std::uint64_t universe);

private:
    std::uint64_t state_;
};

// Derives the seed of a named sub-stream (optionally indexed) from the root
// seed. FNV-1a over the name folded into the root via splitmix steps.
std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                             std::uint64_t a = 0, std::uint64_t b = 0);

}  // namespace frec
