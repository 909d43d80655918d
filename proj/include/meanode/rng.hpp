#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "meanode/common.hpp"

namespace meanode {

namespace detail {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace detail

enum class SeedTag : std::uint64_t {
    layer = 1,
    unit = 2,
    slot = 3,
    repetition = 4,
    input = 5,
};

// Hierarchical seed: a master seed plus a path of (tag, index) pairs.
// The derived key is a pure function of (master, path), so any consumer can
// regenerate exactly the same stream regardless of evaluation order. Streams
// under distinct paths are decorrelated by the SplitMix64 mixing.
struct SeedPath {
    std::uint64_t master = 0;
    std::vector<std::pair<SeedTag, std::uint64_t>> path;

    SeedPath() = default;
    explicit SeedPath(std::uint64_t master_) : master(master_) {}

    SeedPath child(SeedTag tag, std::uint64_t index) const {
        SeedPath out = *this;
        out.path.emplace_back(tag, index);
        return out;
    }

    std::uint64_t key() const {
        std::uint64_t k = detail::mix64(master + detail::kGamma);
        for (const auto& [tag, index] : path) {
            k = detail::mix64(k + detail::kGamma * (static_cast<std::uint64_t>(tag) + 1));
            k = detail::mix64(k + detail::kGamma * (index + 2));
        }
        return k;
    }
};

// Counter-based stream over a derived key: draw i is mix64(key + (i+1)*gamma),
// i.e. random access, no mutable state shared between consumers.
class CounterRng {
public:
    explicit CounterRng(const SeedPath& seed) : key_(seed.key()) {}
    explicit CounterRng(std::uint64_t raw_key) : key_(raw_key) {}

    std::uint64_t bits(std::uint64_t i) const {
        return detail::mix64(key_ + (i + 1) * detail::kGamma);
    }

    // Uniform on [0,1), 53-bit resolution.
    double uniform(std::uint64_t i) const {
        return static_cast<double>(bits(i) >> 11) * 0x1.0p-53;
    }

    // Uniform on (0,1]; safe as a log() argument.
    double uniform_pos(std::uint64_t i) const {
        return static_cast<double>((bits(i) >> 11) + 1) * 0x1.0p-53;
    }

private:
    std::uint64_t key_;
};

// n iid N(0, std^2) draws into out, Box-Muller over the counter stream.
inline void gaussian_fill(const SeedPath& seed, double* out, std::size_t n, double std_dev) {
    if (!(std_dev >= 0.0))
        throw std::invalid_argument("gaussian_fill: std must be >= 0");
    if (n == 0) return;
    if (std_dev == 0.0) {
        for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
        return;
    }
    CounterRng rng(seed);
    const double two_pi = 6.283185307179586476925286766559;
    for (std::size_t m = 0; 2 * m < n; ++m) {
        double u1 = rng.uniform_pos(2 * m);
        double u2 = rng.uniform(2 * m + 1);
        double r = std::sqrt(-2.0 * std::log(u1)) * std_dev;
        double a = two_pi * u2;
        out[2 * m] = r * std::cos(a);
        if (2 * m + 1 < n) out[2 * m + 1] = r * std::sin(a);
    }
}

inline std::vector<double> gaussian_sample(const SeedPath& seed, std::size_t n, double std_dev) {
    std::vector<double> out(n);
    gaussian_fill(seed, out.data(), n, std_dev);
    return out;
}

}  // namespace meanode
