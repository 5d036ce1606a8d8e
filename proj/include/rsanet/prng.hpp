#pragma once

#include <cstdint>

namespace rsanet {

// SplitMix64 (Steele/Lea/Flood). Expands a 64-bit seed into generator state.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
};

// xoshiro256** 1.0 (Blackman/Vigna), seeded through SplitMix64.
// This is the one PRNG used for weight init, shuffling and synthetic data;
// the algorithm is pinned by the test vectors in tests/test_data_io.cpp.
class Xoshiro256ss {
public:
    explicit Xoshiro256ss(uint64_t seed) {
        SplitMix64 sm(seed);
        for (auto& word : s_) word = sm.next();
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1) with 53 (resp. 24) random bits
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    float uniform_float() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform_float(); }

    // unbiased integer in [0, n), n >= 1
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
};

// Deterministic stream derivation for (run seed, stream index) pairs, e.g.
// one shuffle stream per epoch. Pinned alongside the generator.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    SplitMix64 a(seed);
    const uint64_t h = a.next();
    SplitMix64 b(h ^ (stream + 0x9E3779B97F4A7C15ULL));
    return b.next();
}

}  // namespace rsanet
