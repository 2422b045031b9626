#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace efemb {

// mt19937_64 is fully specified by the standard, but the std distributions
// are not; these helpers keep every draw reproducible across toolchains.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Uniform integer in [0, n) by rejection, n > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % n;
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[uniform_index(rng, i)]);
    }
}

// Draws m distinct positions out of [0, n) (partial Fisher-Yates). The result
// is in draw order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t m) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    if (m > n) m = n;
    for (std::size_t i = 0; i < m; ++i) {
        std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
    }
    pool.resize(m);
    return pool;
}

// Standard normal by Box-Muller (one draw per call).
inline double normal(Rng& rng) {
    const double u1 = 1.0 - uniform01(rng);  // (0, 1]
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Poisson by multiplication of uniforms; large rates are split into chunks
// so exp(-chunk) stays representable.
inline std::uint64_t poisson(Rng& rng, double rate) {
    std::uint64_t total = 0;
    while (rate > 0.0) {
        const double chunk = rate > 20.0 ? 20.0 : rate;
        rate -= chunk;
        const double limit = std::exp(-chunk);
        double prod = uniform01(rng);
        while (prod > limit) {
            ++total;
            prod *= uniform01(rng);
        }
    }
    return total;
}

}  // namespace efemb
