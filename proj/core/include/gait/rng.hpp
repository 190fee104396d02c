#pragma once

#include <cstdint>
#include <vector>

namespace gait {

/// splitmix64 step; used to derive independent stream seeds from
/// (root seed, tag, index) tuples.
uint64_t mix_seed(uint64_t a);
uint64_t mix_seed(uint64_t a, uint64_t b);
uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c);

/// Deterministic random stream. The raw generator is xoshiro256**;
/// uniform/normal mappings are implemented here rather than through
/// std::*_distribution so the byte-exact determinism contracts
/// (checkpoints, loss CSVs) survive toolchain changes.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  /// Uniform in [0, bound), bound > 0. Rejection-sampled, unbiased.
  uint64_t next_below(uint64_t bound);
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (both values used).
  double normal();
  double normal(double mean, double stddev);

  /// In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace gait
