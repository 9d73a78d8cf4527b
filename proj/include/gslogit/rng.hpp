#pragma once
#include <cstdint>
#include <random>

namespace gslogit {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used as a counter-based stream splitter.
inline std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for task `index` derived from `master`. Distinct (master, index) pairs give
/// statistically independent streams; the mapping is fixed across platforms.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index)
{
    return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t master, std::uint64_t index = 0)
{
    return Rng(derive_seed(master, index));
}

// Named sub-streams so that independent consumers of one master seed never overlap.
namespace stream {
inline constexpr std::uint64_t design = 1;
inline constexpr std::uint64_t response = 2;
inline constexpr std::uint64_t sampler = 3;
inline constexpr std::uint64_t geometry = 4;
inline constexpr std::uint64_t verify = 5;
inline constexpr std::uint64_t truth = 6;
} // namespace stream

} // namespace gslogit
