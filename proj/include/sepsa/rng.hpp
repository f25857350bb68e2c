#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace sepsa {

// Seeded RNG with hand-mapped distributions.
//
// The mt19937_64 engine is fully specified by the standard, but
// std::uniform_real_distribution / std::normal_distribution are not, so the
// mappings below are done by hand to keep fixed-seed runs bit-identical
// across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        // Rejection sampling to avoid modulo bias.
        const uint64_t limit = n * (UINT64_MAX / n);
        uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    // Standard normal via Box-Muller (no cached second value, so the draw
    // sequence is position-independent).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<uint64_t>(last - first);
        for (uint64_t i = n; i > 1; --i) {
            const uint64_t j = uniform_index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    // splitmix64 finalizer; used to derive sub-seeds from (seed, tag) pairs.
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t hash_str(const std::string& s) {
        // FNV-1a.
        uint64_t h = 1469598103934665603ULL;
        for (const char c : s) {
            h ^= static_cast<uint8_t>(c);
            h *= 1099511628211ULL;
        }
        return h;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace sepsa
