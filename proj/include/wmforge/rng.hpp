#pragma once

#include <cstdint>
#include <random>

namespace wmforge {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for stream `index` under `master`. Streams are stable across runs
/// and independent of evaluation order, so parallel loops stay reproducible.
std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index);

/// Thin wrapper over mt19937_64 with portable variate transforms (the
/// std:: distributions are implementation-defined, these are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1): safe for log().
  double uniform_open();
  /// Uniform integer in [0, n). Rejection-sampled, unbiased.
  std::uint64_t below(std::uint64_t n);
  double normal();
  /// Standard Gumbel(0, 1).
  double gumbel();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace wmforge
