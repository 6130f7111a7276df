#pragma once

#include <cstdint>

namespace skinfit {

// Counter-based generator: every draw is a pure function of (seed, counter),
// so results do not depend on the standard library's distribution code.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Uniform double in [0, 1) with 53 random bits.
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
    const std::uint64_t bits = splitmix64(splitmix64(seed) ^ splitmix64(counter + 0x632BE59BD9B4E019ULL));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Sequential stream over counter_uniform.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t start = 0) : seed_(seed), counter_(start) {}

    double uniform() { return counter_uniform(seed_, counter_++); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const auto v = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

}  // namespace skinfit
