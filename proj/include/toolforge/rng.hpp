#pragma once
// Deterministic, counter-based random streams. Every stream is derived from
// a (seed, name, counter) key, so draws never depend on evaluation order or
// on how many draws another component consumed. Gaussian variates use an
// explicit Box-Muller transform instead of std::normal_distribution, which
// is implementation-defined and would break bit-reproducibility across
// standard libraries.

#include <cstdint>
#include <cmath>
#include <numbers>
#include <string_view>

namespace toolforge::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += kGolden;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xCBF29CE484222325ULL) {
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Sub-seed for a named component at a given index. Used by the harness so
// that per-component streams are reproducible in isolation.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view component, std::uint64_t index = 0) {
    std::uint64_t s = fnv1a(component) ^ (seed + kGolden);
    (void)splitmix64(s);
    s ^= index + kGolden + (s << 6) + (s >> 2);
    (void)splitmix64(s);
    return s;
}

class Stream {
public:
    explicit Stream(std::uint64_t seed) : state_(seed) {}

    // Stream keyed by (seed, name, counter); independent of any other key.
    static Stream keyed(std::uint64_t seed, std::string_view name, std::uint64_t counter) {
        return Stream(derive_seed(seed, name, counter));
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller; consumes exactly two uniforms.
    double gaussian() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

private:
    std::uint64_t state_;
};

} // namespace toolforge::rng
