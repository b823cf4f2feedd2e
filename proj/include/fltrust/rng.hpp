#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace fltrust {

// Deterministic random numbers with explicit substreams.
//
// Every source of randomness in a simulation is a named substream of one
// master seed, so runs are reproducible bit-for-bit regardless of thread
// count or platform. The standard <random> distributions are
// implementation-defined, so the few distributions needed here are done by
// hand on top of xoshiro256++.
//
// Substream scheme: substream_seed(master, round, stream) chains the
// splitmix64 finalizer over (master, round, stream). Rounds are 1-based;
// round 0 is reserved for setup streams (data generation, partitioning,
// parameter init). Stream ids at or above kServerStream are reserved for
// the framework; ids below it are client indices.

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kServerStream = 0xffffffff00000000ull;
constexpr std::uint64_t kAttackStream = 0xffffffff00000001ull;
constexpr std::uint64_t kDataStream = 0xffffffff00000002ull;
constexpr std::uint64_t kPartitionStream = 0xffffffff00000003ull;
constexpr std::uint64_t kRootStream = 0xffffffff00000004ull;
constexpr std::uint64_t kInitStream = 0xffffffff00000005ull;
constexpr std::uint64_t kSampleStream = 0xffffffff00000006ull;
constexpr std::uint64_t kTestDataStream = 0xffffffff00000007ull;

inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t round,
                                    std::uint64_t stream) {
    return mix64(mix64(mix64(master) ^ round) ^ stream);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        // Expand the seed into four nonzero words.
        std::uint64_t x = seed;
        for (auto& w : s_) w = mix64(x += 0x9e3779b97f4a7c15ull);
    }

    // xoshiro256++
    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer on [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t uniform_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller. Draws two uniforms per call; no state
    // is cached, so interleaving with other draws stays reproducible.
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream; does not advance this stream.
    Rng derive(std::uint64_t tag) const {
        return Rng(mix64(mix64(s_[0] ^ s_[3]) ^ tag));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
};

// k distinct indices from [0, n), in random order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                           Rng& rng) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.uniform_below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

}  // namespace fltrust
