#ifndef KAN_RNG_HPP
#define KAN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace kan {

// Deterministic random source. mt19937_64 is fully specified by the
// standard; the distributions below are hand-rolled because the standard
// library's distribution algorithms are implementation-defined and would
// break stream reproducibility across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Box-Muller. Two uniforms per draw, no cached spare, so the stream
    // position is a pure function of the number of calls.
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 1.0 - uniform01(); // (0, 1], keeps log finite
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n) by rejection, bias-free.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t r;
        do {
            r = gen_();
        } while (r >= limit);
        return r % n;
    }

    // Geometric epoch length in {1, 2, ...} with the given mean.
    std::int64_t geometric(double mean) {
        double p = 1.0 / mean;
        double u = 1.0 - uniform01();
        auto n = static_cast<std::int64_t>(std::floor(std::log(u) / std::log1p(-p)));
        return 1 + (n < 0 ? 0 : n);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// splitmix64 finalizer; used to derive independent per-index streams from
// one base seed (position-based, so parallel and serial generation agree).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// FNV-1a, used for config hashes and artifact fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace kan

#endif
