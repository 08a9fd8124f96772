#ifndef KAC_RNG_HPP
#define KAC_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace kac {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of replica `index` under master seed `master`: splitmix64(master + index),
/// mixed twice so neighbouring masters do not share replica streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) + index);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t index) {
  return Rng(derive_seed(master, index));
}

/// Uniform double in (0, 1].
inline double uniform_open0(Rng& rng) {
  return 1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [0, 1).
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n), n >= 1 (Lemire's multiply-shift with rejection).
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  unsigned __int128 m = static_cast<unsigned __int128>(rng()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(rng()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

inline double exponential(Rng& rng, double rate) {
  return -std::log(uniform_open0(rng)) / rate;
}

}  // namespace kac

#endif  // KAC_RNG_HPP
