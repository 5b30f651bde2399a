#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "flameiv/stats.hpp"

namespace flameiv {

// splitmix64 step; used for seed derivation only.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Deterministic substream seed for (root seed, stream index).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
    return splitmix64(root ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

// mt19937_64 engine with hand-rolled distributions. The standard pins the
// engine's output sequence but not the library distributions, so uniforms,
// normals and shuffles are generated here to keep runs byte-stable across
// toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on (0,1), never returning an endpoint.
    double uniform01() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    // Inverse-CDF sampling; see stats.hpp for the quantile.
    double normal(double mean = 0.0, double sd = 1.0) {
        return mean + sd * normal_quantile(uniform01());
    }

    // Uniform integer in [0, n) without modulo bias.
    std::uint64_t uniform_int(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_int(i)]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace flameiv
