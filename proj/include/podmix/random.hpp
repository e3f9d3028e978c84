#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace podmix {

/// SplitMix64 generator. The exact output sequence is part of the dataset
/// contract: recipes are reproducible from (master seed, record index) in any
/// language that implements these few lines.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on the open interval (0, 1) from the top 53 bits.
  double uniform() {
    const std::uint64_t k = next() >> 11;
    return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
  }

  /// Uniform on the open interval (lo, hi). Redraws the rare value that
  /// rounds onto an endpoint.
  double uniform(double lo, double hi) {
    for (;;) {
      const double v = lo + (hi - lo) * uniform();
      if (v > lo && v < hi) return v;
    }
  }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  /// True with probability p.
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

/// Seed of the independent stream owned by one record: the first SplitMix64
/// output for state (master_seed XOR index).
inline std::uint64_t derive_stream_seed(std::uint64_t master_seed,
                                        std::uint64_t index) {
  return SplitMix64(master_seed ^ index).next();
}

}  // namespace podmix
