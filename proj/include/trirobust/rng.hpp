#pragma once

#include <cstdint>

namespace trirobust {

// Counter-based generator: output k is splitmix64(key + k * golden). Streams
// are derived by hashing (seed, stream id) into a new key, so replication r
// draws the same numbers no matter which thread runs it. Uniform and normal
// variates are produced here rather than by <random> distributions, whose
// algorithms differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed)) {}

  // Independent stream `id` derived from `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t id);
  // Child stream of this generator (does not advance it).
  Rng split(std::uint64_t id) const;

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal by the Box-Muller transform.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n), unbiased.
  std::uint64_t index(std::uint64_t n);

  static std::uint64_t mix(std::uint64_t z);

 private:
  Rng(std::uint64_t key, int) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace trirobust
