#include "nullscan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace nullscan {

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
Tensor<T> relu(const Tensor<T> &x) {
  Tensor<T> y = x;
  for (T &v : y.values()) v = v > T{0} ? v : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T> &input, const Tensor<T> &grad_out) {
  require_shape(grad_out.shape(), input.shape(), "relu_backward");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(input[i] > T{0})) g[i] = T{0};
  return g;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T> &x) {
  Tensor<T> y = x;
  for (T &v : y.values()) v = sigmoid(v);
  return y;
}

template <typename T>
Tensor<T> gelu(const Tensor<T> &x) {
  Tensor<T> y = x;
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (T &v : y.values()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  return y;
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T> &input, const Tensor<T> &grad_out) {
  require_shape(grad_out.shape(), input.shape(), "gelu_backward");
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const T x = input[i];
    const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
    g[i] *= cdf + x * pdf;
  }
  return g;
}

namespace {

template <typename T>
void softmax_strided(T *base, std::size_t n, std::size_t stride) {
  T max_v = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < n; ++i) max_v = std::max(max_v, base[i * stride]);
  T sum{0};
  for (std::size_t i = 0; i < n; ++i) {
    T &v = base[i * stride];
    v = std::exp(v - max_v);
    sum += v;
  }
  for (std::size_t i = 0; i < n; ++i) base[i * stride] /= sum;
}

}  // namespace

template <typename T>
void softmax_rows_inplace(Tensor<T> &x) {
  const std::size_t cols = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r)
    softmax_strided(x.data() + r * cols, cols, 1);
}

template <typename T>
Tensor<T> softmax(const Tensor<T> &x, std::size_t axis) {
  Tensor<T> y = x;
  if (y.empty()) return y;
  if (x.rank() == 1) {
    if (axis != 0) throw ShapeError("softmax: axis out of range for vector");
    softmax_strided(y.data(), y.size(), 1);
  } else if (x.rank() == 2) {
    if (axis == 1) {
      softmax_rows_inplace(y);
    } else if (axis == 0) {
      for (std::size_t c = 0; c < y.cols(); ++c)
        softmax_strided(y.data() + c, y.rows(), y.cols());
    } else {
      throw ShapeError("softmax: axis out of range for matrix");
    }
  } else {
    throw ShapeError("softmax: only rank 1 and 2 are supported");
  }
  return y;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T> &x, const Tensor<T> &weight,
                        const Tensor<T> &bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.cols() != weight.rows())
    throw ShapeError("dense: input " + shape_string(x.shape()) +
                     " incompatible with weight " +
                     shape_string(weight.shape()));
  require_shape(bias.shape(), {weight.cols()}, "dense bias");
  Tensor<T> y = matmul(x, weight);
  const std::size_t out = weight.cols();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    T *row = y.data() + r * out;
    for (std::size_t j = 0; j < out; ++j) row[j] += bias[j];
  }
  return y;
}

template <typename T>
Tensor<T> dense_backward(const Tensor<T> &x, Parameter<T> &weight,
                         Parameter<T> &bias, const Tensor<T> &grad_out) {
  require_shape(grad_out.shape(), {x.rows(), weight.value.cols()},
                "dense_backward grad");
  matmul_at_b_accumulate(x, grad_out, weight.grad);
  const std::size_t out = grad_out.cols();
  for (std::size_t r = 0; r < grad_out.rows(); ++r) {
    const T *row = grad_out.data() + r * out;
    for (std::size_t j = 0; j < out; ++j) bias.grad[j] += row[j];
  }
  return matmul_a_bt(grad_out, weight.value);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T> &x, const Tensor<T> &gamma,
                     const Tensor<T> &beta, T eps, LayerNormCache<T> *cache) {
  if (x.rank() != 2 || x.cols() == 0)
    throw ShapeError("layer_norm: expected [n, d>=1], got " +
                     shape_string(x.shape()));
  const std::size_t n = x.rows(), d = x.cols();
  require_shape(gamma.shape(), {d}, "layer_norm gamma");
  require_shape(beta.shape(), {d}, "layer_norm beta");
  Tensor<T> y = Tensor<T>::matrix(n, d);
  if (cache) {
    cache->normalized = Tensor<T>::matrix(n, d);
    cache->inv_std.assign(n, T{0});
  }
  for (std::size_t r = 0; r < n; ++r) {
    const T *in = x.data() + r * d;
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<T>(d);
    const T inv_std = T{1} / std::sqrt(var + eps);
    T *out = y.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (in[j] - mean) * inv_std;
      if (cache) cache->normalized(r, j) = xhat;
      out[j] = xhat * gamma[j] + beta[j];
    }
    if (cache) cache->inv_std[r] = inv_std;
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm_backward(const LayerNormCache<T> &cache,
                              Parameter<T> &gamma, Parameter<T> &beta,
                              const Tensor<T> &grad_out) {
  const Tensor<T> &xhat = cache.normalized;
  require_shape(grad_out.shape(), xhat.shape(), "layer_norm_backward");
  const std::size_t n = xhat.rows(), d = xhat.cols();
  Tensor<T> dx = Tensor<T>::matrix(n, d);
  std::vector<T> dxhat(d);
  for (std::size_t r = 0; r < n; ++r) {
    const T *g = grad_out.data() + r * d;
    const T *xh = xhat.data() + r * d;
    T sum_dxhat{0}, sum_dxhat_xhat{0};
    for (std::size_t j = 0; j < d; ++j) {
      gamma.grad[j] += g[j] * xh[j];
      beta.grad[j] += g[j];
      dxhat[j] = g[j] * gamma.value[j];
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * xh[j];
    }
    const T scale = cache.inv_std[r] / static_cast<T>(d);
    T *out = dx.data() + r * d;
    for (std::size_t j = 0; j < d; ++j)
      out[j] = scale * (static_cast<T>(d) * dxhat[j] - sum_dxhat -
                        xh[j] * sum_dxhat_xhat);
  }
  return dx;
}

template <typename T>
Tensor<T> dropout(const Tensor<T> &x, double p, Mode mode, RngState &rng,
                  DropoutMask *mask) {
  if (!(p >= 0.0 && p < 1.0))
    throw InputError("dropout probability must be in [0, 1), got " +
                     std::to_string(p));
  if (mask) *mask = DropoutMask{};
  if (mode == Mode::eval || p == 0.0) return x;
  const double scale = 1.0 / (1.0 - p);
  Tensor<T> y = x;
  std::vector<std::uint8_t> keep(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    keep[i] = rng.uniform() >= p ? 1 : 0;
    y[i] = keep[i] ? static_cast<T>(y[i] * scale) : T{0};
  }
  if (mask) {
    mask->keep = std::move(keep);
    mask->scale = scale;
  }
  return y;
}

template <typename T>
Tensor<T> dropout_backward(const DropoutMask &mask, const Tensor<T> &grad_out) {
  if (mask.keep.empty()) return grad_out;
  if (mask.keep.size() != grad_out.size())
    throw ShapeError("dropout_backward: mask/gradient size mismatch");
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = mask.keep[i] ? static_cast<T>(g[i] * mask.scale) : T{0};
  return g;
}

template <typename T>
CrossEntropyResult<T> cross_entropy(const Tensor<T> &logits,
                                    std::span<const int> labels) {
  if (logits.rank() != 2 || logits.cols() != 2 || logits.rows() != labels.size())
    throw ShapeError("cross_entropy: logits " + shape_string(logits.shape()) +
                     " vs " + std::to_string(labels.size()) + " labels");
  if (labels.empty()) throw ShapeError("cross_entropy: empty batch");
  const std::size_t n = logits.rows();
  CrossEntropyResult<T> result{T{0}, Tensor<T>::matrix(n, 2)};
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t r = 0; r < n; ++r) {
    const int label = labels[r];
    if (label != 0 && label != 1)
      throw InputError("cross_entropy: label " + std::to_string(label) +
                       " outside {0,1}");
    const T a = logits(r, 0), b = logits(r, 1);
    const T m = std::max(a, b);
    const T lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    result.loss += (lse - logits(r, static_cast<std::size_t>(label))) * inv_n;
    for (std::size_t c = 0; c < 2; ++c) {
      const T prob = std::exp(logits(r, c) - lse);
      result.grad(r, c) =
          (prob - (static_cast<int>(c) == label ? T{1} : T{0})) * inv_n;
    }
  }
  return result;
}

template <typename T>
Tensor<T> normal_init(const Shape &shape, double stddev, RngState &rng) {
  Tensor<T> t(shape);
  for (T &v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

#define NULLSCAN_INSTANTIATE(T)                                                \
  template T sigmoid(T);                                                       \
  template Tensor<T> relu(const Tensor<T> &);                                  \
  template Tensor<T> relu_backward(const Tensor<T> &, const Tensor<T> &);      \
  template Tensor<T> sigmoid(const Tensor<T> &);                               \
  template Tensor<T> gelu(const Tensor<T> &);                                  \
  template Tensor<T> gelu_backward(const Tensor<T> &, const Tensor<T> &);      \
  template Tensor<T> softmax(const Tensor<T> &, std::size_t);                  \
  template void softmax_rows_inplace(Tensor<T> &);                             \
  template Tensor<T> dense_forward(const Tensor<T> &, const Tensor<T> &,       \
                                   const Tensor<T> &);                         \
  template Tensor<T> dense_backward(const Tensor<T> &, Parameter<T> &,         \
                                    Parameter<T> &, const Tensor<T> &);        \
  template Tensor<T> layer_norm(const Tensor<T> &, const Tensor<T> &,          \
                                const Tensor<T> &, T, LayerNormCache<T> *);    \
  template Tensor<T> layer_norm_backward(const LayerNormCache<T> &,            \
                                         Parameter<T> &, Parameter<T> &,       \
                                         const Tensor<T> &);                   \
  template Tensor<T> dropout(const Tensor<T> &, double, Mode, RngState &,      \
                             DropoutMask *);                                   \
  template Tensor<T> dropout_backward(const DropoutMask &, const Tensor<T> &); \
  template CrossEntropyResult<T> cross_entropy(const Tensor<T> &,              \
                                               std::span<const int>);          \
  template Tensor<T> normal_init(const Shape &, double, RngState &);

NULLSCAN_INSTANTIATE(float)
NULLSCAN_INSTANTIATE(double)
#undef NULLSCAN_INSTANTIATE

}  // namespace nullscan
