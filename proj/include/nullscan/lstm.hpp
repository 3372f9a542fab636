#pragma once

#include <span>
#include <vector>

#include "nullscan/model.hpp"
#include "nullscan/nn.hpp"

namespace nullscan {

struct LstmConfig {
  std::size_t max_vocab_size = 10000;
  std::size_t max_sequence_length = 500;
  std::size_t embedding_dim = 100;
  std::vector<std::size_t> units = {64, 32};
  std::size_t dense_units = 32;

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static LstmConfig from_json(const nlohmann::ordered_json &j);

  friend bool operator==(const LstmConfig &, const LstmConfig &) = default;
};

/// Gate blocks are laid out [input | forget | cell | output] along the
/// second axis.
template <typename T>
struct LstmLayerWeights {
  Parameter<T> input_w;      // [in, 4H]
  Parameter<T> recurrent_w;  // [H, 4H]
  Parameter<T> bias;         // [4H]

  std::size_t units() const { return recurrent_w.value.rows(); }
  std::size_t input_dim() const { return input_w.value.rows(); }
};

template <typename T>
struct LstmWeights {
  Parameter<T> embedding;  // [vocab, embedding_dim]
  std::vector<LstmLayerWeights<T>> layers;
  Parameter<T> dense_w, dense_b;            // last units -> dense_units
  Parameter<T> classifier_w, classifier_b;  // dense_units -> 2

  /// N(0, 0.02) weights, zero biases except the forget gate (1).
  static LstmWeights init(const LstmConfig &config, RngState &rng);
  ParameterRefs<T> parameters();
  void validate(const LstmConfig &config) const;
};

template <typename T>
struct LstmStepCache {
  std::vector<T> x, h_prev, c_prev;
  std::vector<T> i, f, g, o, c, tanh_c;
};

template <typename T>
struct LstmState {
  std::vector<T> h;
  std::vector<T> c;
};

/// f,i,o = sigmoid(affine), g = tanh(affine), c = f*c_prev + i*g,
/// h = o*tanh(c).
template <typename T>
LstmState<T> lstm_cell_step(std::span<const T> x, std::span<const T> h_prev,
                            std::span<const T> c_prev,
                            const LstmLayerWeights<T> &w,
                            LstmStepCache<T> *cache = nullptr);

/// Backward through one step. `dh`, `dc` are dL/dh_t and dL/dc_t; returns
/// {dx, dh_prev, dc_prev} and accumulates weight gradients.
template <typename T>
struct LstmStepGrads {
  std::vector<T> dx, dh_prev, dc_prev;
};

template <typename T>
LstmStepGrads<T> lstm_cell_backward(const LstmStepCache<T> &cache,
                                    LstmLayerWeights<T> &w,
                                    std::span<const T> dh,
                                    std::span<const T> dc);

template <typename T>
struct LstmTrace {
  std::vector<TokenId> ids;
  std::vector<std::vector<LstmStepCache<T>>> steps;  // [layer][t]
  std::vector<T> last_hidden;
  Tensor<T> pre_relu, dense_out;
};

template <typename T>
Tensor<T> lstm_logits(std::span<const TokenId> ids, const LstmWeights<T> &w,
                      const LstmConfig &config, LstmTrace<T> *trace = nullptr);

/// embed -> stacked LSTM -> last hidden state -> ReLU dense -> 2 logits.
template <typename T>
VulnPrediction lstm_classify(std::span<const TokenId> ids,
                             const LstmWeights<T> &w, const LstmConfig &config);

/// Cross-entropy against `label` with full BPTT; returns the loss.
template <typename T>
T lstm_loss_backward(std::span<const TokenId> ids, int label,
                     LstmWeights<T> &w, const LstmConfig &config,
                     T loss_scale = T{1});

/// The LSTM baseline behind the Classifier interface. Uses the fallback
/// tokenizer with a hash vocabulary capped at max_vocab_size.
class LstmClassifier final : public Classifier {
 public:
  LstmClassifier(LstmConfig config, LstmWeights<float> weights);
  static LstmClassifier create(const LstmConfig &config, RngState &rng);

  std::string kind() const override { return "lstm"; }
  const Tokenizer &tokenizer() const override { return tokenizer_; }
  VulnPrediction predict(const TokenizedSample &sample) const override;
  double accumulate_gradients(const TokenizedSample &sample, int label,
                              double loss_scale, RngState &rng) override;
  ParameterRefs<float> parameters() override { return weights_.parameters(); }
  nlohmann::ordered_json config_json() const override;

  const LstmConfig &config() const noexcept { return config_; }
  LstmWeights<float> &weights() noexcept { return weights_; }

 private:
  LstmConfig config_;
  LstmWeights<float> weights_;
  Tokenizer tokenizer_;
};

/// Content ids of a framed sample: bos, eos and padding stripped.
std::span<const TokenId> content_ids(const TokenizedSample &sample);

}  // namespace nullscan
