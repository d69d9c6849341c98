#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace cairl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for item `index` of a stream rooted at `seed`. Used to partition
/// the seed space so that parallel or reordered work stays reproducible.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Maps 64 random bits to [0, 1) with 53-bit resolution.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline double uniform01(Rng& rng) { return to_unit(rng()); }

/// SplitMix64 stream: a few draws per seed at negligible setup cost, for
/// per-item streams where seeding a Mersenne Twister would dominate.
class SplitMix {
 public:
  constexpr explicit SplitMix(std::uint64_t seed) noexcept : state_(seed) {}
  constexpr std::uint64_t next() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }
  constexpr double uniform() noexcept { return to_unit(next()); }

 private:
  std::uint64_t state_;
};

/// Inverse-CDF draw from an unnormalized non-negative weight vector.
template <typename Range>
std::size_t sample_categorical(const Range& weights, double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  double target = u * total;
  std::size_t last_positive = 0;
  std::size_t i = 0;
  for (double w : weights) {
    if (w > 0.0) {
      last_positive = i;
      if (target < w) return i;
      target -= w;
    }
    ++i;
  }
  return last_positive;
}

}  // namespace cairl
