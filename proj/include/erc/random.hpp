#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace erc {

/// 64-bit FNV-1a. Used wherever a stable, platform-independent hash is needed
/// (per-query seeds, config hashes).
constexpr std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

/// SplitMix64 finalizer; combines a base seed with a salt into a new seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::string_view salt) {
    return mix_seed(seed, fnv1a64(salt));
}

/// Deterministic generator whose outputs do not depend on the standard
/// library's distribution implementations (those are unspecified), so runs
/// reproduce bit-for-bit across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) {
        // Rejection sampling over the largest multiple of bound.
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x = 0;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    /// Fisher-Yates; only the first `count` positions are drawn when count < size.
    template <typename T>
    void partial_shuffle(std::span<T> items, std::size_t count) {
        const std::size_t n = items.size();
        if (count > n) count = n;
        for (std::size_t i = 0; i < count && i + 1 < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(below(n - i));
            std::swap(items[i], items[j]);
        }
    }

    template <typename T>
    void shuffle(std::span<T> items) {
        partial_shuffle(items, items.size());
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace erc
