#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mfsb {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive hash of a key tuple, used for counter-based seeding.
constexpr std::uint64_t hash_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (auto p : parts) h = mix64(h ^ mix64(p));
  return h;
}

/// Independent RNG streams derived from one global seed.
enum class Stream : std::uint64_t {
  Split = 1,
  Init = 2,
  Shuffle = 3,
  Noise = 4,
  Latent = 5,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(hash_seed({seed, static_cast<std::uint64_t>(stream)}));
}

/// i.i.d. N(0, sigma^2); sigma = 0 yields zeros without consuming the RNG.
inline std::vector<double> gaussian_vector(std::size_t n, double sigma, Rng& rng) {
  std::vector<double> out(n, 0.0);
  if (sigma == 0.0) return out;
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& x : out) x = dist(rng);
  return out;
}

}  // namespace mfsb
