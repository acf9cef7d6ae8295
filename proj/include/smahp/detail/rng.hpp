#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace smahp::detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Order-sensitive mix of several integers into one seed.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts)
{
    std::uint64_t h = 0x5A17C0DEull;
    for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

using Rng = std::mt19937_64;

} // namespace smahp::detail
