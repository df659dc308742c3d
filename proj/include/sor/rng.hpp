#pragma once

#include <array>
#include <cstdint>

namespace sor {

/// SplitMix64 step. Used for seeding and for deriving substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Mix an ordered tuple of integers into a single 64-bit seed.
/// Grid runs derive per-job streams as mix_seed({master, cell, seed}).
inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t s = 0x6a09e667f3bcc909ULL;
    for (std::uint64_t p : parts) {
        s ^= splitmix64(p) + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    }
    return s;
}

/// xoshiro256** by Blackman and Vigna. Chosen over std engines because its
/// output sequence is fixed by the algorithm, not by the standard library
/// implementation, so seeded results are identical across platforms.
///
/// Stream discipline: every consumer draws from its own engine seeded via
/// mix_seed/substream; a single engine is never shared between tasks.
class Xoshiro256 {
public:
    explicit Xoshiro256(std::uint64_t seed) {
        // Canonical seeding: fill state from SplitMix64.
        for (auto& word : state_) word = splitmix64(seed);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Lemire's multiply-shift; n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    /// Seed for the k-th substream of this run (k-th SplitMix64 output).
    static std::uint64_t substream(std::uint64_t run_seed, std::uint64_t k) {
        std::uint64_t s = run_seed;
        std::uint64_t out = 0;
        for (std::uint64_t i = 0; i <= k; ++i) out = splitmix64(s);
        return out;
    }

    static constexpr const char* kAlgorithmName = "xoshiro256**";

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace sor
