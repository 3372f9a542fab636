#include "nullscan/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nullscan/rng.hpp"

namespace nullscan {

std::uint64_t regime_fingerprint(std::uint64_t seed, bool bit) {
  // FNV-1a step over one bit.
  return (seed ^ (bit ? 0x9eu : 0x31u)) * 0x100000001b3ULL;
}

GradCheckResult grad_check(const ParameterRefs<double> &params,
                           const std::function<GradProbe()> &f,
                           const GradCheckOptions &options) {
  GradCheckResult result;
  RngState rng(options.seed);
  for (Parameter<double> *param : params) {
    const std::size_t n = param->value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > options.samples_per_parameter) {
      std::shuffle(coords.begin(), coords.end(), rng.engine());
      coords.resize(options.samples_per_parameter);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      double &x = param->value[idx];
      const double saved = x;
      x = saved + options.eps;
      const GradProbe plus = f();
      x = saved - options.eps;
      const GradProbe minus = f();
      x = saved;
      if (plus.regime != minus.regime) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.eps);
      const double analytic = param->grad[idx];
      const double denom = std::max(
          {std::abs(numeric), std::abs(analytic), options.denominator_floor});
      const double rel = std::abs(numeric - analytic) / denom;
      ++result.checked;
      if (rel > result.max_relative_error || result.worst.empty()) {
        if (rel >= result.max_relative_error) {
          result.max_relative_error = rel;
          result.worst = param->name + "[" + std::to_string(idx) + "]";
        }
      }
    }
  }
  return result;
}

}  // namespace nullscan
