#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace depflux {

/// Random stream used by every sampler and simulator.
using Stream = std::mt19937_64;

/// SplitMix64 finalizer; a bijection on 64-bit words with good avalanche.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for replicate `index` of a run seeded with `master`.
/// Streams for distinct (master, index) pairs are seeded from disjoint
/// SplitMix64 outputs, so replicates can run in any order or thread.
inline Stream make_stream(std::uint64_t master, std::uint64_t index) {
  const std::uint64_t a = splitmix64(master ^ splitmix64(index));
  const std::uint64_t b = splitmix64(a + index);
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Stream(seq);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Stream& rng) noexcept {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Exponential waiting time with the given rate (rate > 0).
inline double exponential(Stream& rng, double rate) noexcept {
  // 1 - u lies in (0, 1], so the log is finite.
  return -std::log1p(-uniform01(rng)) / rate;
}

}  // namespace depflux
