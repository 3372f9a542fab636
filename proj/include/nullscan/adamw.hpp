#pragma once

#include <cstdint>
#include <vector>

#include "nullscan/tensor.hpp"

namespace nullscan {

struct AdamWConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// AdamW with weight decay decoupled from the moment estimates:
///   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
/// Moments are bound to parameters by position; the parameter list passed to
/// step() must be the same on every call.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// Applies one update using the gradients currently stored in `params`.
  /// Throws NumericalError (leaving every parameter untouched) when any
  /// gradient entry is non-finite.
  void step(const ParameterRefs<T> &params);

  std::uint64_t step_count() const noexcept { return t_; }
  const AdamWConfig &config() const noexcept { return config_; }
  const std::vector<Tensor<T>> &first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>> &second_moments() const noexcept { return v_; }

 private:
  AdamWConfig config_;
  std::uint64_t t_ = 0;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
};

}  // namespace nullscan
