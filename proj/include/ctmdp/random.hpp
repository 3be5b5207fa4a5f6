#pragma once

// Counter-based random streams. A stream is a (key, counter) pair and each
// draw is a bijective mix of key + counter * golden-gamma (the SplitMix64
// finalizer), so episode streams can be derived from (master seed, index)
// without any shared state.

#include <cmath>
#include <cstdint>

namespace ctmdp {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : key_(mix64(key)) {}

  /// Independent stream for substream `index` of a master seed.
  static constexpr CounterRng derive(std::uint64_t master, std::uint64_t index) {
    return CounterRng(mix64(master + kGoldenGamma) ^ mix64(index * 0xD1B54A32D192ED03ULL + 1));
  }

  constexpr std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGoldenGamma); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  /// Exp(1) by inversion.
  double exponential() { return -std::log(uniform()); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ctmdp
