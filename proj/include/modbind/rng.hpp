#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace modbind {

// Single-word PRNG (splitmix64). One u64 of state keeps checkpoints trivial
// and makes runs bit-reproducible for a given seed on any platform.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller. No cached spare: every draw consumes
    // exactly two uniforms, so the state stays a single u64.
    double normal() {
        double u1 = 1.0 - uniform01(); // (0, 1], keeps log() finite
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Unbiased integer in [0, n) by rejection.
    uint64_t next_below(uint64_t n) {
        uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    uint64_t state() const noexcept { return state_; }

private:
    uint64_t state_;
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const void* data, size_t len) {
    uint64_t h = 0xCBF29CE484222325ULL;
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

// All randomness flows from one master seed through labeled derivations
// (e.g. derive_seed(master, "stage:bind-audio")). Purposes stay independent
// while the whole run remains a function of the master seed.
inline uint64_t derive_seed(uint64_t master, std::string_view label) {
    SplitMix64 mixer(master ^ (fnv1a64(label) * 0x9E3779B97F4A7C15ULL));
    return mixer.next();
}

// Fisher-Yates shuffle driven by the supplied generator.
template <typename T>
void shuffle(std::vector<T>& values, SplitMix64& rng) {
    if (values.size() < 2) return;
    for (size_t i = values.size() - 1; i > 0; --i) {
        size_t j = static_cast<size_t>(rng.next_below(i + 1));
        std::swap(values[i], values[j]);
    }
}

} // namespace modbind
