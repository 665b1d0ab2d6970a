#pragma once

#include <array>
#include <cstdint>

namespace rasgd {

/// Philox4x32 with 10 rounds (Salmon et al. counter-based generator).
/// Pure function of (counter, key); no internal state.
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter counter, Key key) noexcept;
};

/// Purpose tags keep draws for different uses disjoint even when they share
/// (seed, worker, index).
enum class StreamPurpose : std::uint32_t {
  GradientNoise = 1,
  BatchSampling = 2,
  ComputeTime = 3,
  Initialization = 4,
  Dataset = 5,
  Shuffle = 6,
  Probe = 7,
};

/// A reproducible random stream keyed by (seed, purpose, worker, index).
/// The stream is an infinite sequence of Philox blocks; two streams with
/// different keys never share a block.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamPurpose purpose, std::uint32_t worker,
               std::uint64_t index) noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;
  double normal() noexcept;
  /// Exponential variate with the given mean.
  double exponential(double mean) noexcept;

 private:
  void refill() noexcept;

  Philox4x32::Key key_;
  Philox4x32::Counter counter_;
  Philox4x32::Counter block_{};
  int used_ = 4;
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace rasgd
