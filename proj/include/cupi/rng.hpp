#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <vector>

namespace cupi {

// splitmix64 finalizer. Used both for seed derivation and for counter-based
// (stateless) noise where the same value must be reproducible regardless of
// evaluation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derives an independent stream seed from (seed, tag, salt). Different tags
// give uncorrelated streams so that e.g. dataset shuffling never shares state
// with parameter initialization.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t salt = 0) {
    std::uint64_t h = splitmix64(seed);
    for (char c : tag) {
        h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    }
    return splitmix64(h ^ salt);
}

// Uniform double in [0,1) from a raw 64-bit word (53 mantissa bits).
inline double u64_to_unit(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Deterministic RNG. std::mt19937_64 has a standard-specified sequence; the
// distributions below are hand-rolled because the std ones are
// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return u64_to_unit(eng_()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; draws two uniforms per call.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace cupi
