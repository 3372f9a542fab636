#pragma once

#include <memory>

#include "nullscan/encoder.hpp"
#include "nullscan/model.hpp"

namespace nullscan {

struct HeadConfig {
  std::size_t input_dim = 0;
  std::size_t dense_dim = 512;
  std::size_t num_classes = 2;
  double dropout_p = 0.3;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static HeadConfig from_json(const nlohmann::ordered_json &j);

  friend bool operator==(const HeadConfig &, const HeadConfig &) = default;
};

template <typename T>
struct HeadWeights {
  Parameter<T> dense_w;       // [input_dim, dense_dim]
  Parameter<T> dense_b;       // [dense_dim]
  Parameter<T> classifier_w;  // [dense_dim, 2]
  Parameter<T> classifier_b;  // [2]

  static HeadWeights init(const HeadConfig &config, RngState &rng);
  ParameterRefs<T> parameters();
  void validate(const HeadConfig &config) const;
};

template <typename T>
struct HeadCache {
  Tensor<T> dropped;     // [1, input_dim] after dropout
  DropoutMask drop;
  Tensor<T> pre_relu;    // [1, dense_dim]
  Tensor<T> hidden;      // [1, dense_dim]
};

/// dropout -> dense -> ReLU -> dense, returning logits [1, 2].
template <typename T>
Tensor<T> head_logits(const Tensor<T> &feature, const HeadWeights<T> &w,
                      const HeadConfig &config, Mode mode, RngState &rng,
                      HeadCache<T> *cache = nullptr);

template <typename T>
VulnPrediction head_forward(const Tensor<T> &feature, const HeadWeights<T> &w,
                            const HeadConfig &config, Mode mode, RngState &rng);

/// Returns dL/dfeature [input_dim]; accumulates head weight gradients.
template <typename T>
Tensor<T> head_backward(const HeadCache<T> &cache, HeadWeights<T> &w,
                        const Tensor<T> &grad_logits);

/// Two-class cross-entropy of logits [1, 2] against `label`.
template <typename T>
CrossEntropyResult<T> training_loss(const Tensor<T> &logits, int label);

// ---- assembled model ------------------------------------------------------

template <typename T>
struct TransformerModel {
  EncoderConfig encoder_config;
  EncoderWeights<T> encoder;
  HeadConfig head_config;
  HeadWeights<T> head;
  PoolingMode pooling = PoolingMode::final_cls;

  static TransformerModel init(const EncoderConfig &encoder_config,
                               PoolingMode pooling, std::size_t dense_dim,
                               double head_dropout, RngState &rng);
  ParameterRefs<T> parameters();
  void validate() const;

  template <typename U>
  TransformerModel<U> cast() const {
    TransformerModel<U> out;
    out.encoder_config = encoder_config;
    out.head_config = head_config;
    out.pooling = pooling;
    RngState scratch(0);
    out.encoder = EncoderWeights<U>::init(encoder_config, scratch);
    out.head = HeadWeights<U>::init(head_config, scratch);
    auto self = const_cast<TransformerModel *>(this)->parameters();
    copy_parameter_values<T, U>(self, out.parameters());
    return out;
  }
};

template <typename T>
struct ModelTrace {
  EncoderTrace<T> encoder;
  LayerActivations<T> activations;
  HeadCache<T> head;
};

template <typename T>
Tensor<T> model_logits(const TokenizedSample &sample,
                       const TransformerModel<T> &model, Mode mode,
                       RngState &rng, ModelTrace<T> *trace = nullptr);

/// encode -> pool -> head. Deterministic in eval mode.
template <typename T>
VulnPrediction model_forward(const TokenizedSample &sample,
                             const TransformerModel<T> &model, Mode mode,
                             RngState &rng);

/// Forward in `mode`, cross-entropy against `label`, full backward with
/// gradients of loss * loss_scale accumulated into the model. Returns loss.
template <typename T>
T model_loss_backward(const TokenizedSample &sample, int label,
                      TransformerModel<T> &model, Mode mode, RngState &rng,
                      T loss_scale = T{1});

/// The transformer pipeline behind the Classifier interface.
class TransformerClassifier final : public Classifier {
 public:
  TransformerClassifier(TransformerModel<float> model, Tokenizer tokenizer);

  std::string kind() const override { return "transformer"; }
  const Tokenizer &tokenizer() const override { return tokenizer_; }
  VulnPrediction predict(const TokenizedSample &sample) const override;
  double accumulate_gradients(const TokenizedSample &sample, int label,
                              double loss_scale, RngState &rng) override;
  ParameterRefs<float> parameters() override { return model_.parameters(); }
  nlohmann::ordered_json config_json() const override;

  TransformerModel<float> &model() noexcept { return model_; }
  const TransformerModel<float> &model() const noexcept { return model_; }

 private:
  TransformerModel<float> model_;
  Tokenizer tokenizer_;
};

}  // namespace nullscan
