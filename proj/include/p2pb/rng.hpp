#pragma once

#include <cstdint>
#include <random>

namespace p2pb {

/// Seeded random generator used everywhere randomness is needed.
///
/// All draws go through hand-rolled transforms on top of std::mt19937_64 so a
/// given seed yields the same stream on every standard library. Substreams
/// (per pair, per patch, per batch slot) are derived with `derive`, which
/// hashes (seed, stream id) into a fresh seed; this is what keeps parallel
/// patch execution reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n), n >= 1.
  int uniform_int(int n);
  /// Standard normal (Box-Muller, second value cached).
  double normal();

  /// Independent substream keyed by this generator's seed and `stream`.
  Rng derive(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer; used for seed mixing.
std::uint64_t mix_u64(std::uint64_t x);

} // namespace p2pb
