#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace cmrplan {

// splitmix64 finalizer; used to derive independent streams from tuples of keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed) noexcept { return mix64(seed); }

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key, Rest... rest) noexcept
{
    return derive_seed(mix64(seed ^ mix64(key)), static_cast<std::uint64_t>(rest)...);
}

// FNV-1a, for folding strings (patient ids) into seeds.
constexpr std::uint64_t hash_string(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Counter-based stream: the i-th draw is a pure function of (key, i), so
// per-voxel noise does not depend on iteration order or thread schedule.
class CounterStream {
public:
    explicit CounterStream(std::uint64_t key) noexcept : key_(key) {}

    std::uint64_t next_u64() noexcept { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // Uniform in (0, 1].
    double next_unit() noexcept
    {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Box-Muller pair of independent standard normals.
    std::pair<double, double> next_normal_pair() noexcept
    {
        const double r = std::sqrt(-2.0 * std::log(next_unit()));
        const double phi = 2.0 * std::numbers::pi * next_unit();
        return {r * std::cos(phi), r * std::sin(phi)};
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

} // namespace cmrplan
