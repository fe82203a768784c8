#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "agentsynth/core/error.hpp"

namespace agentsynth {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Counter-based seed fan-out: the seed for (root, stage, index) depends on
/// nothing else, so any stage or sample can be replayed in isolation.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stage, std::uint64_t index) {
    return splitmix64(splitmix64(root ^ fnv1a64(stage)) + index);
}

/// Deterministic random source. std::mt19937_64's output sequence is fixed by
/// the standard; the standard distributions are not, so we draw by hand.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        require(n > 0, ErrorKind::InvalidArgument, "Rng::index on empty range");
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    /// Uniform integer in [lo, hi].
    long long between(long long lo, long long hi) {
        require(lo <= hi, ErrorKind::InvalidArgument, "Rng::between with lo > hi");
        return lo + static_cast<long long>(index(static_cast<std::size_t>(hi - lo) + 1));
    }

    /// Uniform real in [0, 1).
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool chance(double p) { return unit() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    template <typename T>
    const T& pick(std::span<const T> items) {
        return items[index(items.size())];
    }

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items[index(items.size())];
    }

    /// k distinct indices from [0, n), in draw order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        require(k <= n, ErrorKind::InvalidArgument, "Rng::sample_indices k > n");
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(all[i], all[i + index(n - i)]);
        }
        all.resize(k);
        return all;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace agentsynth
