#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nullscan/rng.hpp"
#include "nullscan/tensor.hpp"

namespace nullscan {

enum class Mode { train, eval };

// ---- activations ----------------------------------------------------------

template <typename T>
T sigmoid(T x);

template <typename T>
Tensor<T> relu(const Tensor<T> &x);
/// Gradient of relu given its forward input; the kink at 0 maps to 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T> &input, const Tensor<T> &grad_out);

template <typename T>
Tensor<T> sigmoid(const Tensor<T> &x);

/// Exact (erf) GELU, as used inside BERT-family feed-forward blocks.
template <typename T>
Tensor<T> gelu(const Tensor<T> &x);
template <typename T>
Tensor<T> gelu_backward(const Tensor<T> &input, const Tensor<T> &grad_out);

/// Softmax along `axis` (0 or 1 for matrices, 0 for vectors). Max-shifted.
template <typename T>
Tensor<T> softmax(const Tensor<T> &x, std::size_t axis);
/// Row-wise softmax in place on a matrix, shared by attention.
template <typename T>
void softmax_rows_inplace(Tensor<T> &x);

// ---- dense ----------------------------------------------------------------

/// y = x·W + b for x [n,in], W [in,out], b [out].
template <typename T>
Tensor<T> dense_forward(const Tensor<T> &x, const Tensor<T> &weight,
                        const Tensor<T> &bias);

/// Accumulates dW and db into the parameters and returns dL/dx.
template <typename T>
Tensor<T> dense_backward(const Tensor<T> &x, Parameter<T> &weight,
                         Parameter<T> &bias, const Tensor<T> &grad_out);

// ---- layer norm -----------------------------------------------------------

template <typename T>
struct LayerNormCache {
  Tensor<T> normalized;
  std::vector<T> inv_std;
};

/// Normalizes each row of x [n,d] then applies gamma/beta [d].
template <typename T>
Tensor<T> layer_norm(const Tensor<T> &x, const Tensor<T> &gamma,
                     const Tensor<T> &beta, T eps = T(1e-5),
                     LayerNormCache<T> *cache = nullptr);

template <typename T>
Tensor<T> layer_norm_backward(const LayerNormCache<T> &cache,
                              Parameter<T> &gamma, Parameter<T> &beta,
                              const Tensor<T> &grad_out);

// ---- dropout --------------------------------------------------------------

struct DropoutMask {
  std::vector<std::uint8_t> keep;  // empty => identity
  double scale = 1.0;
};

/// Inverted dropout: survivors are scaled by 1/(1-p). Eval mode and p == 0
/// are exact identities and do not consume randomness.
template <typename T>
Tensor<T> dropout(const Tensor<T> &x, double p, Mode mode, RngState &rng,
                  DropoutMask *mask = nullptr);

template <typename T>
Tensor<T> dropout_backward(const DropoutMask &mask, const Tensor<T> &grad_out);

// ---- loss -----------------------------------------------------------------

template <typename T>
struct CrossEntropyResult {
  T loss;
  Tensor<T> grad;  // dL/dlogits, already divided by batch size
};

/// Mean negative log-likelihood of `labels` under softmax(logits) for
/// logits [n,2].
template <typename T>
CrossEntropyResult<T> cross_entropy(const Tensor<T> &logits,
                                    std::span<const int> labels);

// ---- init -----------------------------------------------------------------

template <typename T>
Tensor<T> normal_init(const Shape &shape, double stddev, RngState &rng);

}  // namespace nullscan
