#pragma once

#include <cstdint>
#include <random>

namespace nullscan {

/// Seeded generator for parameter init, dropout masks and shuffles.
/// Never shared across threads.
class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Uniform in [0, 1) built from the top 53 bits of one draw.
  double uniform() noexcept {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double normal(double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(engine_);
  }
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) {
    std::uniform_int_distribution<std::uint64_t> dist(0, bound - 1);
    return dist(engine_);
  }
  std::mt19937_64 &engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace nullscan
