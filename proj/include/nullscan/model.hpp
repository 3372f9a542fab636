#pragma once

#include <array>
#include <string>
#include <string_view>

#include "json.hpp"
#include "nullscan/rng.hpp"
#include "nullscan/tensor.hpp"
#include "nullscan/tokenizer.hpp"

namespace nullscan {

enum class Verdict { non_vulnerable = 0, vulnerable = 1 };

std::string_view to_string(Verdict verdict);

/// Classifier output. Probabilities are the elementwise sigmoid of the two
/// logits and need not sum to one; the verdict is the argmax with ties going
/// to non_vulnerable.
struct VulnPrediction {
  std::string sample_id;
  std::array<double, 2> logits{};
  std::array<double, 2> probabilities{};
  Verdict verdict = Verdict::non_vulnerable;

  /// sigmoid(logits[verdict]).
  double confidence() const {
    return probabilities[static_cast<std::size_t>(verdict)];
  }
  int label() const { return verdict == Verdict::vulnerable ? 1 : 0; }

  friend bool operator==(const VulnPrediction &,
                         const VulnPrediction &) = default;
};

VulnPrediction make_prediction(double non_vulnerable_logit,
                               double vulnerable_logit,
                               std::string sample_id = {});

/// What the training/evaluation harness needs from a model. Implemented by
/// the transformer pipeline and the LSTM baseline.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string kind() const = 0;
  virtual const Tokenizer &tokenizer() const = 0;
  TokenizedSample tokenize(std::string_view source) const {
    return tokenizer().encode(source);
  }

  /// Eval-mode forward pass; must be safe to call concurrently.
  virtual VulnPrediction predict(const TokenizedSample &sample) const = 0;

  /// Train-mode forward + backward for one sample. Gradients of
  /// `loss * loss_scale` are added into parameters(); returns the unscaled
  /// loss.
  virtual double accumulate_gradients(const TokenizedSample &sample, int label,
                                      double loss_scale, RngState &rng) = 0;

  virtual ParameterRefs<float> parameters() = 0;

  void zero_grad() {
    for (Parameter<float> *p : parameters()) p->zero_grad();
  }

  /// Architecture description persisted in checkpoints.
  virtual nlohmann::ordered_json config_json() const = 0;
};

/// Copies values between two parameter lists of identical layout.
template <typename From, typename To>
void copy_parameter_values(const ParameterRefs<From> &from,
                           const ParameterRefs<To> &to) {
  if (from.size() != to.size())
    throw ShapeError("parameter lists differ in length");
  for (std::size_t i = 0; i < from.size(); ++i) {
    require_shape(from[i]->shape(), to[i]->shape(), to[i]->name);
    auto &dst = to[i]->value.values();
    const auto &src = from[i]->value.values();
    for (std::size_t j = 0; j < src.size(); ++j)
      dst[j] = static_cast<To>(src[j]);
  }
}

}  // namespace nullscan
