#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "nullscan/tensor.hpp"

namespace nullscan {

/// One evaluation of the function under test. `regime` fingerprints the
/// piecewise-linear pieces the evaluation went through (e.g. the sign
/// pattern of every relu input); a coordinate whose +eps and -eps probes
/// land in different regimes straddles a kink and is skipped.
struct GradProbe {
  double value = 0.0;
  std::uint64_t regime = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates sampled per parameter; parameters with fewer entries are
  /// checked exhaustively.
  std::size_t samples_per_parameter = 48;
  /// Lower bound on the denominator of the relative error.
  double denominator_floor = 1e-7;
  std::uint64_t seed = 17;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::string worst;  // "name[index]" of the worst coordinate
};

/// Compares the analytic gradients already stored in `params[i]->grad`
/// against central differences of `f`. `f` must be deterministic (dropout
/// in eval mode) and must read parameter values on every call.
GradCheckResult grad_check(const ParameterRefs<double> &params,
                           const std::function<GradProbe()> &f,
                           const GradCheckOptions &options = {});

/// Folds a boolean pattern into a regime fingerprint.
std::uint64_t regime_fingerprint(std::uint64_t seed, bool bit);

}  // namespace nullscan
