#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nullscan/nn.hpp"
#include "nullscan/tokenizer.hpp"

namespace nullscan {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t hidden_dim = 0;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t ffn_dim = 0;
  std::size_t max_positions = 0;
  double dropout_p = 0.1;

  /// `codebert-base` (12 layers, 768 hidden, 12 heads, 3072 ffn, 512
  /// positions) or `tiny` (2, 64, 4, 128, 64).
  static EncoderConfig preset(std::string_view name, std::size_t vocab_size);

  std::size_t head_dim() const { return hidden_dim / num_heads; }
  /// Throws InputError when the shape is inconsistent.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static EncoderConfig from_json(const nlohmann::ordered_json &j);

  friend bool operator==(const EncoderConfig &, const EncoderConfig &) = default;
};

template <typename T>
struct EncoderLayerWeights {
  Parameter<T> query_w, query_b, key_w, key_b, value_w, value_b;
  Parameter<T> attn_out_w, attn_out_b, attn_norm_gamma, attn_norm_beta;
  Parameter<T> ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
  Parameter<T> ffn_norm_gamma, ffn_norm_beta;

  static EncoderLayerWeights init(const EncoderConfig &config,
                                  std::size_t index, RngState &rng);
  ParameterRefs<T> parameters();
};

template <typename T>
struct EncoderWeights {
  Parameter<T> token_embedding;     // [vocab, hidden]
  Parameter<T> position_embedding;  // [max_positions, hidden]
  Parameter<T> embed_norm_gamma, embed_norm_beta;
  std::vector<EncoderLayerWeights<T>> layers;

  /// Embedding and dense weights ~ N(0, 0.02); biases 0; norms identity.
  static EncoderWeights init(const EncoderConfig &config, RngState &rng);
  ParameterRefs<T> parameters();
  void validate(const EncoderConfig &config) const;
};

/// Per-layer hidden states: index 0 is the embedding output, index i the
/// output of layer i. Each is [seq, hidden].
template <typename T>
struct LayerActivations {
  std::vector<Tensor<T>> states;
};

// ---- caches for backprop --------------------------------------------------

template <typename T>
struct EmbedCache {
  std::vector<TokenId> ids;
  LayerNormCache<T> norm;
  DropoutMask drop;
};

template <typename T>
struct AttentionCache {
  Tensor<T> input;
  std::vector<Tensor<T>> q, k, v;   // per head [seq, head_dim]
  std::vector<Tensor<T>> probs;     // per head softmax output [seq, seq]
  std::vector<Tensor<T>> dropped;   // per head probs after dropout
  std::vector<DropoutMask> prob_drop;
  Tensor<T> context;                // [seq, hidden]
};

template <typename T>
struct FeedForwardCache {
  Tensor<T> input;
  Tensor<T> pre_activation;
  Tensor<T> activation;
  DropoutMask drop;
};

template <typename T>
struct EncoderLayerCache {
  AttentionCache<T> attention;
  LayerNormCache<T> attn_norm;
  FeedForwardCache<T> ffn;
  LayerNormCache<T> ffn_norm;
};

template <typename T>
struct EncoderTrace {
  EmbedCache<T> embed;
  std::vector<EncoderLayerCache<T>> layers;
};

// ---- forward --------------------------------------------------------------

inline constexpr double kMaskedLogit = -1e9;

template <typename T>
Tensor<T> embed(const TokenizedSample &tokens, const EncoderWeights<T> &w,
                const EncoderConfig &config, Mode mode, RngState &rng,
                EmbedCache<T> *cache = nullptr);

/// Self-attention over h [seq, hidden]; keys with mask 0 get kMaskedLogit.
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T> &h,
                               std::span<const std::uint8_t> mask,
                               const EncoderLayerWeights<T> &w,
                               const EncoderConfig &config, Mode mode,
                               RngState &rng, AttentionCache<T> *cache = nullptr);

/// dense(hidden->ffn) -> GELU -> dense(ffn->hidden) -> dropout.
template <typename T>
Tensor<T> feed_forward(const Tensor<T> &h, const EncoderLayerWeights<T> &w,
                       const EncoderConfig &config, Mode mode, RngState &rng,
                       FeedForwardCache<T> *cache = nullptr);

/// Post-norm wiring: h1 = LN(h + MHA(h)); out = LN(h1 + FFN(h1)).
template <typename T>
Tensor<T> encoder_layer(const Tensor<T> &h, std::span<const std::uint8_t> mask,
                        const EncoderLayerWeights<T> &w,
                        const EncoderConfig &config, Mode mode, RngState &rng,
                        EncoderLayerCache<T> *cache = nullptr);

template <typename T>
LayerActivations<T> encode(const TokenizedSample &tokens,
                           const EncoderWeights<T> &w,
                           const EncoderConfig &config, Mode mode,
                           RngState &rng, EncoderTrace<T> *trace = nullptr);

/// Eval-mode convenience; deterministic.
template <typename T>
LayerActivations<T> encode(const TokenizedSample &tokens,
                           const EncoderWeights<T> &w,
                           const EncoderConfig &config);

// ---- backward -------------------------------------------------------------

template <typename T>
void embed_backward(const EmbedCache<T> &cache, EncoderWeights<T> &w,
                    const Tensor<T> &grad_out);

template <typename T>
Tensor<T> multi_head_attention_backward(const AttentionCache<T> &cache,
                                        EncoderLayerWeights<T> &w,
                                        const EncoderConfig &config,
                                        const Tensor<T> &grad_out);

template <typename T>
Tensor<T> feed_forward_backward(const FeedForwardCache<T> &cache,
                                EncoderLayerWeights<T> &w,
                                const Tensor<T> &grad_out);

template <typename T>
Tensor<T> encoder_layer_backward(const EncoderLayerCache<T> &cache,
                                 EncoderLayerWeights<T> &w,
                                 const EncoderConfig &config,
                                 const Tensor<T> &grad_out);

/// `state_grads[i]` is dL/dstates[i] (empty tensors count as zero).
/// Accumulates into every weight gradient.
template <typename T>
void encode_backward(const EncoderTrace<T> &trace, EncoderWeights<T> &w,
                     const EncoderConfig &config,
                     std::vector<Tensor<T>> state_grads);

// ---- pooling --------------------------------------------------------------

enum class PoolingMode { final_cls, mean_layers_cls, concat_layers_cls };

PoolingMode parse_pooling_mode(std::string_view name);
std::string_view to_string(PoolingMode mode);
std::size_t pooled_dim(PoolingMode mode, const EncoderConfig &config);

template <typename T>
Tensor<T> pool(const LayerActivations<T> &acts, PoolingMode mode);

/// Scatters dL/dfeature back onto the per-state gradients.
template <typename T>
std::vector<Tensor<T>> pool_backward(const LayerActivations<T> &acts,
                                     PoolingMode mode,
                                     const Tensor<T> &grad_feature);

}  // namespace nullscan
