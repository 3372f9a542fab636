#include "nullscan/adamw.hpp"

#include <cmath>

namespace nullscan {

template <typename T>
void AdamW<T>::step(const ParameterRefs<T> &params) {
  if (m_.empty()) {
    for (const Parameter<T> *p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  if (m_.size() != params.size())
    throw ShapeError("AdamW: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(params[i]->grad.shape(), m_[i].shape(),
                  "AdamW moment for " + params[i]->name);
    if (!params[i]->grad.all_finite())
      throw NumericalError("AdamW: non-finite gradient in parameter '" +
                           params[i]->name + "' at step " +
                           std::to_string(t_ + 1));
  }

  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = config_.learning_rate, wd = config_.weight_decay;
  const double eps = config_.epsilon;

  for (std::size_t i = 0; i < params.size(); ++i) {
    T *theta = params[i]->value.data();
    const T *g = params[i]->grad.data();
    T *m = m_[i].data();
    T *v = v_[i].data();
    const std::size_t n = params[i]->value.size();
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / bias1;
      const double v_hat = vj / bias2;
      const double th = theta[j];
      theta[j] =
          static_cast<T>(th - lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * th));
    }
  }
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace nullscan
