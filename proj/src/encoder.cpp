#include "nullscan/encoder.hpp"

#include <cmath>

#include "nullscan/errors.hpp"

namespace nullscan {

using json = nlohmann::ordered_json;

namespace {
constexpr double kInitStddev = 0.02;
}

// ---- config ---------------------------------------------------------------

EncoderConfig EncoderConfig::preset(std::string_view name,
                                    std::size_t vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  if (name == "codebert-base") {
    c.num_layers = 12;
    c.hidden_dim = 768;
    c.num_heads = 12;
    c.ffn_dim = 3072;
    c.max_positions = 512;
  } else if (name == "tiny") {
    c.num_layers = 2;
    c.hidden_dim = 64;
    c.num_heads = 4;
    c.ffn_dim = 128;
    c.max_positions = 64;
  } else {
    throw InputError("unknown encoder preset '" + std::string(name) +
                     "' (expected codebert-base or tiny)");
  }
  return c;
}

void EncoderConfig::validate() const {
  if (vocab_size == 0 || hidden_dim == 0 || num_heads == 0 || ffn_dim == 0 ||
      max_positions == 0)
    throw InputError("encoder config has a zero dimension");
  if (hidden_dim % num_heads != 0)
    throw InputError("hidden_dim " + std::to_string(hidden_dim) +
                     " is not divisible by num_heads " +
                     std::to_string(num_heads));
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw InputError("encoder dropout must be in [0, 1)");
}

json EncoderConfig::to_json() const {
  return {{"vocab_size", vocab_size},   {"hidden_dim", hidden_dim},
          {"num_layers", num_layers},   {"num_heads", num_heads},
          {"ffn_dim", ffn_dim},         {"max_positions", max_positions},
          {"dropout_p", dropout_p}};
}

EncoderConfig EncoderConfig::from_json(const json &j) {
  EncoderConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.dropout_p = j.value("dropout_p", 0.1);
  c.validate();
  return c;
}

// ---- weights --------------------------------------------------------------

template <typename T>
EncoderLayerWeights<T> EncoderLayerWeights<T>::init(const EncoderConfig &c,
                                                    std::size_t index,
                                                    RngState &rng) {
  const std::string p = "encoder.layers." + std::to_string(index) + ".";
  const std::size_t h = c.hidden_dim, f = c.ffn_dim;
  auto weight = [&](const std::string &name, std::size_t in, std::size_t out) {
    return Parameter<T>(p + name, normal_init<T>({in, out}, kInitStddev, rng));
  };
  auto zeros = [&](const std::string &name, std::size_t n) {
    return Parameter<T>(p + name, Tensor<T>::vector(n));
  };
  auto ones = [&](const std::string &name, std::size_t n) {
    return Parameter<T>(p + name, Tensor<T>::vector(n, T{1}));
  };
  EncoderLayerWeights w;
  w.query_w = weight("attention.query.weight", h, h);
  w.query_b = zeros("attention.query.bias", h);
  w.key_w = weight("attention.key.weight", h, h);
  w.key_b = zeros("attention.key.bias", h);
  w.value_w = weight("attention.value.weight", h, h);
  w.value_b = zeros("attention.value.bias", h);
  w.attn_out_w = weight("attention.output.weight", h, h);
  w.attn_out_b = zeros("attention.output.bias", h);
  w.attn_norm_gamma = ones("attention.norm.gamma", h);
  w.attn_norm_beta = zeros("attention.norm.beta", h);
  w.ffn_in_w = weight("ffn.in.weight", h, f);
  w.ffn_in_b = zeros("ffn.in.bias", f);
  w.ffn_out_w = weight("ffn.out.weight", f, h);
  w.ffn_out_b = zeros("ffn.out.bias", h);
  w.ffn_norm_gamma = ones("ffn.norm.gamma", h);
  w.ffn_norm_beta = zeros("ffn.norm.beta", h);
  return w;
}

template <typename T>
ParameterRefs<T> EncoderLayerWeights<T>::parameters() {
  return {&query_w,         &query_b,       &key_w,     &key_b,
          &value_w,         &value_b,       &attn_out_w, &attn_out_b,
          &attn_norm_gamma, &attn_norm_beta, &ffn_in_w,  &ffn_in_b,
          &ffn_out_w,       &ffn_out_b,     &ffn_norm_gamma, &ffn_norm_beta};
}

template <typename T>
EncoderWeights<T> EncoderWeights<T>::init(const EncoderConfig &c,
                                          RngState &rng) {
  c.validate();
  EncoderWeights w;
  w.token_embedding = Parameter<T>(
      "encoder.embeddings.token",
      normal_init<T>({c.vocab_size, c.hidden_dim}, kInitStddev, rng));
  w.position_embedding = Parameter<T>(
      "encoder.embeddings.position",
      normal_init<T>({c.max_positions, c.hidden_dim}, kInitStddev, rng));
  w.embed_norm_gamma = Parameter<T>("encoder.embeddings.norm.gamma",
                                    Tensor<T>::vector(c.hidden_dim, T{1}));
  w.embed_norm_beta = Parameter<T>("encoder.embeddings.norm.beta",
                                   Tensor<T>::vector(c.hidden_dim));
  for (std::size_t i = 0; i < c.num_layers; ++i)
    w.layers.push_back(EncoderLayerWeights<T>::init(c, i, rng));
  return w;
}

template <typename T>
ParameterRefs<T> EncoderWeights<T>::parameters() {
  ParameterRefs<T> refs{&token_embedding, &position_embedding,
                        &embed_norm_gamma, &embed_norm_beta};
  for (auto &layer : layers)
    for (Parameter<T> *p : layer.parameters()) refs.push_back(p);
  return refs;
}

template <typename T>
void EncoderWeights<T>::validate(const EncoderConfig &c) const {
  const std::size_t h = c.hidden_dim, f = c.ffn_dim;
  require_shape(token_embedding.shape(), {c.vocab_size, h}, token_embedding.name);
  require_shape(position_embedding.shape(), {c.max_positions, h},
                position_embedding.name);
  require_shape(embed_norm_gamma.shape(), {h}, embed_norm_gamma.name);
  require_shape(embed_norm_beta.shape(), {h}, embed_norm_beta.name);
  if (layers.size() != c.num_layers)
    throw ShapeError("encoder has " + std::to_string(layers.size()) +
                     " layers, config says " + std::to_string(c.num_layers));
  for (const auto &l : layers) {
    for (const Parameter<T> *p :
         {&l.query_w, &l.key_w, &l.value_w, &l.attn_out_w})
      require_shape(p->shape(), {h, h}, p->name);
    for (const Parameter<T> *p :
         {&l.query_b, &l.key_b, &l.value_b, &l.attn_out_b, &l.attn_norm_gamma,
          &l.attn_norm_beta, &l.ffn_out_b, &l.ffn_norm_gamma, &l.ffn_norm_beta})
      require_shape(p->shape(), {h}, p->name);
    require_shape(l.ffn_in_w.shape(), {h, f}, l.ffn_in_w.name);
    require_shape(l.ffn_in_b.shape(), {f}, l.ffn_in_b.name);
    require_shape(l.ffn_out_w.shape(), {f, h}, l.ffn_out_w.name);
  }
}

// ---- forward --------------------------------------------------------------

template <typename T>
Tensor<T> embed(const TokenizedSample &tokens, const EncoderWeights<T> &w,
                const EncoderConfig &config, Mode mode, RngState &rng,
                EmbedCache<T> *cache) {
  const std::size_t seq = tokens.token_ids.size(), h = config.hidden_dim;
  if (seq > config.max_positions)
    throw ShapeError("sequence length " + std::to_string(seq) +
                     " exceeds max_positions " +
                     std::to_string(config.max_positions));
  Tensor<T> x = Tensor<T>::matrix(seq, h);
  for (std::size_t pos = 0; pos < seq; ++pos) {
    const TokenId id = tokens.token_ids[pos];
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size)
      throw InputError("token id " + std::to_string(id) + " at position " +
                       std::to_string(pos) + " outside vocabulary of size " +
                       std::to_string(config.vocab_size));
    const auto tok = w.token_embedding.value.row(static_cast<std::size_t>(id));
    const auto posv = w.position_embedding.value.row(pos);
    auto out = x.row(pos);
    for (std::size_t j = 0; j < h; ++j) out[j] = tok[j] + posv[j];
  }
  if (cache) cache->ids = tokens.token_ids;
  Tensor<T> normed =
      layer_norm(x, w.embed_norm_gamma.value, w.embed_norm_beta.value, T(1e-5),
                 cache ? &cache->norm : nullptr);
  return dropout(normed, config.dropout_p, mode, rng,
                 cache ? &cache->drop : nullptr);
}

namespace {

template <typename T>
Tensor<T> head_slice(const Tensor<T> &x, std::size_t head, std::size_t dh) {
  Tensor<T> out = Tensor<T>::matrix(x.rows(), dh);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < dh; ++j) out(r, j) = x(r, head * dh + j);
  return out;
}

template <typename T>
void head_scatter(Tensor<T> &dst, const Tensor<T> &src, std::size_t head,
                  std::size_t dh) {
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t j = 0; j < dh; ++j) dst(r, head * dh + j) = src(r, j);
}

}  // namespace

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T> &h,
                               std::span<const std::uint8_t> mask,
                               const EncoderLayerWeights<T> &w,
                               const EncoderConfig &config, Mode mode,
                               RngState &rng, AttentionCache<T> *cache) {
  const std::size_t seq = h.rows(), hidden = config.hidden_dim;
  require_shape(h.shape(), {seq, hidden}, "attention input");
  if (mask.size() != seq)
    throw ShapeError("attention mask length " + std::to_string(mask.size()) +
                     " != sequence length " + std::to_string(seq));
  const std::size_t heads = config.num_heads, dh = config.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  const Tensor<T> q = dense_forward(h, w.query_w.value, w.query_b.value);
  const Tensor<T> k = dense_forward(h, w.key_w.value, w.key_b.value);
  const Tensor<T> v = dense_forward(h, w.value_w.value, w.value_b.value);
  Tensor<T> context = Tensor<T>::matrix(seq, hidden);
  if (cache) {
    *cache = AttentionCache<T>{};
    cache->input = h;
  }
  for (std::size_t head = 0; head < heads; ++head) {
    Tensor<T> qh = head_slice(q, head, dh);
    Tensor<T> kh = head_slice(k, head, dh);
    Tensor<T> vh = head_slice(v, head, dh);
    Tensor<T> scores = matmul_a_bt(qh, kh);
    for (std::size_t i = 0; i < seq; ++i) {
      T *row = scores.data() + i * seq;
      for (std::size_t j = 0; j < seq; ++j) {
        row[j] *= scale;
        if (!mask[j]) row[j] += static_cast<T>(kMaskedLogit);
      }
    }
    softmax_rows_inplace(scores);
    DropoutMask drop;
    Tensor<T> dropped = dropout(scores, config.dropout_p, mode, rng, &drop);
    head_scatter(context, matmul(dropped, vh), head, dh);
    if (cache) {
      cache->q.push_back(std::move(qh));
      cache->k.push_back(std::move(kh));
      cache->v.push_back(std::move(vh));
      cache->probs.push_back(std::move(scores));
      cache->dropped.push_back(std::move(dropped));
      cache->prob_drop.push_back(std::move(drop));
    }
  }
  Tensor<T> out = dense_forward(context, w.attn_out_w.value, w.attn_out_b.value);
  if (cache) cache->context = std::move(context);
  return out;
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T> &h, const EncoderLayerWeights<T> &w,
                       const EncoderConfig &config, Mode mode, RngState &rng,
                       FeedForwardCache<T> *cache) {
  require_shape(h.shape(), {h.rows(), config.hidden_dim}, "feed_forward input");
  Tensor<T> pre = dense_forward(h, w.ffn_in_w.value, w.ffn_in_b.value);
  Tensor<T> act = gelu(pre);
  Tensor<T> out = dense_forward(act, w.ffn_out_w.value, w.ffn_out_b.value);
  Tensor<T> dropped = dropout(out, config.dropout_p, mode, rng,
                              cache ? &cache->drop : nullptr);
  if (cache) {
    cache->input = h;
    cache->pre_activation = std::move(pre);
    cache->activation = std::move(act);
  }
  return dropped;
}

template <typename T>
Tensor<T> encoder_layer(const Tensor<T> &h, std::span<const std::uint8_t> mask,
                        const EncoderLayerWeights<T> &w,
                        const EncoderConfig &config, Mode mode, RngState &rng,
                        EncoderLayerCache<T> *cache) {
  Tensor<T> attn = multi_head_attention(h, mask, w, config, mode, rng,
                                        cache ? &cache->attention : nullptr);
  add_inplace(attn, h);
  Tensor<T> h1 = layer_norm(attn, w.attn_norm_gamma.value,
                            w.attn_norm_beta.value, T(1e-5),
                            cache ? &cache->attn_norm : nullptr);
  Tensor<T> ffn = feed_forward(h1, w, config, mode, rng,
                               cache ? &cache->ffn : nullptr);
  add_inplace(ffn, h1);
  return layer_norm(ffn, w.ffn_norm_gamma.value, w.ffn_norm_beta.value,
                    T(1e-5), cache ? &cache->ffn_norm : nullptr);
}

template <typename T>
LayerActivations<T> encode(const TokenizedSample &tokens,
                           const EncoderWeights<T> &w,
                           const EncoderConfig &config, Mode mode,
                           RngState &rng, EncoderTrace<T> *trace) {
  if (tokens.attention_mask.size() != tokens.token_ids.size())
    throw ShapeError("token ids and attention mask differ in length");
  if (trace) {
    *trace = EncoderTrace<T>{};
    trace->layers.resize(config.num_layers);
  }
  LayerActivations<T> acts;
  acts.states.reserve(config.num_layers + 1);
  acts.states.push_back(
      embed(tokens, w, config, mode, rng, trace ? &trace->embed : nullptr));
  for (std::size_t i = 0; i < config.num_layers; ++i)
    acts.states.push_back(encoder_layer(acts.states.back(),
                                        tokens.attention_mask, w.layers[i],
                                        config, mode, rng,
                                        trace ? &trace->layers[i] : nullptr));
  return acts;
}

template <typename T>
LayerActivations<T> encode(const TokenizedSample &tokens,
                           const EncoderWeights<T> &w,
                           const EncoderConfig &config) {
  RngState unused(0);
  return encode(tokens, w, config, Mode::eval, unused,
                static_cast<EncoderTrace<T> *>(nullptr));
}

// ---- backward -------------------------------------------------------------

template <typename T>
void embed_backward(const EmbedCache<T> &cache, EncoderWeights<T> &w,
                    const Tensor<T> &grad_out) {
  const Tensor<T> d_norm = dropout_backward(cache.drop, grad_out);
  const Tensor<T> dx = layer_norm_backward(cache.norm, w.embed_norm_gamma,
                                           w.embed_norm_beta, d_norm);
  const std::size_t h = dx.cols();
  for (std::size_t pos = 0; pos < cache.ids.size(); ++pos) {
    auto src = dx.row(pos);
    auto tok = w.token_embedding.grad.row(static_cast<std::size_t>(cache.ids[pos]));
    auto posg = w.position_embedding.grad.row(pos);
    for (std::size_t j = 0; j < h; ++j) {
      tok[j] += src[j];
      posg[j] += src[j];
    }
  }
}

template <typename T>
Tensor<T> multi_head_attention_backward(const AttentionCache<T> &cache,
                                        EncoderLayerWeights<T> &w,
                                        const EncoderConfig &config,
                                        const Tensor<T> &grad_out) {
  const std::size_t seq = cache.input.rows(), hidden = config.hidden_dim;
  const std::size_t dh = config.head_dim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Tensor<T> d_context =
      dense_backward(cache.context, w.attn_out_w, w.attn_out_b, grad_out);
  Tensor<T> dq = Tensor<T>::matrix(seq, hidden);
  Tensor<T> dk = Tensor<T>::matrix(seq, hidden);
  Tensor<T> dv = Tensor<T>::matrix(seq, hidden);
  for (std::size_t head = 0; head < config.num_heads; ++head) {
    const Tensor<T> d_ctx_h = head_slice(d_context, head, dh);
    Tensor<T> dvh = Tensor<T>::matrix(seq, dh);
    matmul_at_b_accumulate(cache.dropped[head], d_ctx_h, dvh);
    Tensor<T> d_probs =
        dropout_backward(cache.prob_drop[head], matmul_a_bt(d_ctx_h, cache.v[head]));
    const Tensor<T> &p = cache.probs[head];
    for (std::size_t i = 0; i < seq; ++i) {
      T *dp = d_probs.data() + i * seq;
      const T *pr = p.data() + i * seq;
      T dot{0};
      for (std::size_t j = 0; j < seq; ++j) dot += dp[j] * pr[j];
      for (std::size_t j = 0; j < seq; ++j) dp[j] = pr[j] * (dp[j] - dot) * scale;
    }
    // d_probs now holds dL/d(QK^T) including the 1/sqrt(d) factor.
    head_scatter(dq, matmul(d_probs, cache.k[head]), head, dh);
    Tensor<T> dkh = Tensor<T>::matrix(seq, dh);
    matmul_at_b_accumulate(d_probs, cache.q[head], dkh);
    head_scatter(dk, dkh, head, dh);
    head_scatter(dv, dvh, head, dh);
  }
  Tensor<T> dh_total = dense_backward(cache.input, w.query_w, w.query_b, dq);
  add_inplace(dh_total, dense_backward(cache.input, w.key_w, w.key_b, dk));
  add_inplace(dh_total, dense_backward(cache.input, w.value_w, w.value_b, dv));
  return dh_total;
}

template <typename T>
Tensor<T> feed_forward_backward(const FeedForwardCache<T> &cache,
                                EncoderLayerWeights<T> &w,
                                const Tensor<T> &grad_out) {
  const Tensor<T> d_out = dropout_backward(cache.drop, grad_out);
  const Tensor<T> d_act =
      dense_backward(cache.activation, w.ffn_out_w, w.ffn_out_b, d_out);
  const Tensor<T> d_pre = gelu_backward(cache.pre_activation, d_act);
  return dense_backward(cache.input, w.ffn_in_w, w.ffn_in_b, d_pre);
}

template <typename T>
Tensor<T> encoder_layer_backward(const EncoderLayerCache<T> &cache,
                                 EncoderLayerWeights<T> &w,
                                 const EncoderConfig &config,
                                 const Tensor<T> &grad_out) {
  Tensor<T> d_sum2 = layer_norm_backward(cache.ffn_norm, w.ffn_norm_gamma,
                                         w.ffn_norm_beta, grad_out);
  Tensor<T> d_h1 = feed_forward_backward(cache.ffn, w, d_sum2);
  add_inplace(d_h1, d_sum2);
  Tensor<T> d_sum1 = layer_norm_backward(cache.attn_norm, w.attn_norm_gamma,
                                         w.attn_norm_beta, d_h1);
  Tensor<T> d_h = multi_head_attention_backward(cache.attention, w, config, d_sum1);
  add_inplace(d_h, d_sum1);
  return d_h;
}

template <typename T>
void encode_backward(const EncoderTrace<T> &trace, EncoderWeights<T> &w,
                     const EncoderConfig &config,
                     std::vector<Tensor<T>> state_grads) {
  if (state_grads.size() != config.num_layers + 1)
    throw ShapeError("encode_backward: expected " +
                     std::to_string(config.num_layers + 1) + " state gradients");
  Tensor<T> carry = std::move(state_grads.back());
  for (std::size_t i = config.num_layers; i-- > 0;) {
    if (carry.empty()) {
      carry = std::move(state_grads[i]);
      continue;
    }
    Tensor<T> below =
        encoder_layer_backward(trace.layers[i], w.layers[i], config, carry);
    if (!state_grads[i].empty()) add_inplace(below, state_grads[i]);
    carry = std::move(below);
  }
  if (!carry.empty()) embed_backward(trace.embed, w, carry);
}

// ---- pooling --------------------------------------------------------------

PoolingMode parse_pooling_mode(std::string_view name) {
  if (name == "final_cls") return PoolingMode::final_cls;
  if (name == "mean_layers_cls") return PoolingMode::mean_layers_cls;
  if (name == "concat_layers_cls") return PoolingMode::concat_layers_cls;
  throw InputError("unknown pooling mode '" + std::string(name) + "'");
}

std::string_view to_string(PoolingMode mode) {
  switch (mode) {
    case PoolingMode::final_cls:
      return "final_cls";
    case PoolingMode::mean_layers_cls:
      return "mean_layers_cls";
    case PoolingMode::concat_layers_cls:
      return "concat_layers_cls";
  }
  return "final_cls";
}

std::size_t pooled_dim(PoolingMode mode, const EncoderConfig &config) {
  return mode == PoolingMode::concat_layers_cls
             ? (config.num_layers + 1) * config.hidden_dim
             : config.hidden_dim;
}

template <typename T>
Tensor<T> pool(const LayerActivations<T> &acts, PoolingMode mode) {
  if (acts.states.empty()) throw ShapeError("pool: no hidden states");
  const std::size_t h = acts.states.front().cols();
  switch (mode) {
    case PoolingMode::final_cls: {
      const auto row = acts.states.back().row(0);
      return Tensor<T>({h}, std::vector<T>(row.begin(), row.end()));
    }
    case PoolingMode::mean_layers_cls: {
      Tensor<T> out = Tensor<T>::vector(h);
      for (const auto &s : acts.states)
        for (std::size_t j = 0; j < h; ++j) out[j] += s(0, j);
      const T inv = T(1) / static_cast<T>(acts.states.size());
      for (T &v : out.values()) v *= inv;
      return out;
    }
    case PoolingMode::concat_layers_cls: {
      std::vector<T> out;
      out.reserve(h * acts.states.size());
      for (const auto &s : acts.states) {
        const auto row = s.row(0);
        out.insert(out.end(), row.begin(), row.end());
      }
      const std::size_t n = out.size();
      return Tensor<T>({n}, std::move(out));
    }
  }
  throw InputError("unknown pooling mode");
}

template <typename T>
std::vector<Tensor<T>> pool_backward(const LayerActivations<T> &acts,
                                     PoolingMode mode,
                                     const Tensor<T> &grad_feature) {
  const std::size_t n = acts.states.size();
  const std::size_t h = acts.states.front().cols();
  std::vector<Tensor<T>> grads(n);
  auto row0 = [&](std::size_t i) -> Tensor<T> & {
    grads[i] = Tensor<T>(acts.states[i].shape());
    return grads[i];
  };
  switch (mode) {
    case PoolingMode::final_cls: {
      Tensor<T> &g = row0(n - 1);
      for (std::size_t j = 0; j < h; ++j) g(0, j) = grad_feature[j];
      break;
    }
    case PoolingMode::mean_layers_cls: {
      const T inv = T(1) / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) {
        Tensor<T> &g = row0(i);
        for (std::size_t j = 0; j < h; ++j) g(0, j) = grad_feature[j] * inv;
      }
      break;
    }
    case PoolingMode::concat_layers_cls:
      for (std::size_t i = 0; i < n; ++i) {
        Tensor<T> &g = row0(i);
        for (std::size_t j = 0; j < h; ++j) g(0, j) = grad_feature[i * h + j];
      }
      break;
  }
  return grads;
}

#define NULLSCAN_INSTANTIATE(T)                                                \
  template struct EncoderLayerWeights<T>;                                      \
  template struct EncoderWeights<T>;                                           \
  template Tensor<T> embed(const TokenizedSample &, const EncoderWeights<T> &, \
                           const EncoderConfig &, Mode, RngState &,            \
                           EmbedCache<T> *);                                   \
  template Tensor<T> multi_head_attention(                                     \
      const Tensor<T> &, std::span<const std::uint8_t>,                        \
      const EncoderLayerWeights<T> &, const EncoderConfig &, Mode, RngState &, \
      AttentionCache<T> *);                                                    \
  template Tensor<T> feed_forward(const Tensor<T> &,                           \
                                  const EncoderLayerWeights<T> &,              \
                                  const EncoderConfig &, Mode, RngState &,     \
                                  FeedForwardCache<T> *);                      \
  template Tensor<T> encoder_layer(                                            \
      const Tensor<T> &, std::span<const std::uint8_t>,                        \
      const EncoderLayerWeights<T> &, const EncoderConfig &, Mode, RngState &, \
      EncoderLayerCache<T> *);                                                 \
  template LayerActivations<T> encode(const TokenizedSample &,                 \
                                      const EncoderWeights<T> &,               \
                                      const EncoderConfig &, Mode, RngState &, \
                                      EncoderTrace<T> *);                      \
  template LayerActivations<T> encode(const TokenizedSample &,                 \
                                      const EncoderWeights<T> &,               \
                                      const EncoderConfig &);                  \
  template void embed_backward(const EmbedCache<T> &, EncoderWeights<T> &,     \
                               const Tensor<T> &);                             \
  template Tensor<T> multi_head_attention_backward(                            \
      const AttentionCache<T> &, EncoderLayerWeights<T> &,                     \
      const EncoderConfig &, const Tensor<T> &);                               \
  template Tensor<T> feed_forward_backward(const FeedForwardCache<T> &,        \
                                           EncoderLayerWeights<T> &,           \
                                           const Tensor<T> &);                 \
  template Tensor<T> encoder_layer_backward(                                   \
      const EncoderLayerCache<T> &, EncoderLayerWeights<T> &,                  \
      const EncoderConfig &, const Tensor<T> &);                               \
  template void encode_backward(const EncoderTrace<T> &, EncoderWeights<T> &,  \
                                const EncoderConfig &,                         \
                                std::vector<Tensor<T>>);                       \
  template Tensor<T> pool(const LayerActivations<T> &, PoolingMode);           \
  template std::vector<Tensor<T>> pool_backward(                               \
      const LayerActivations<T> &, PoolingMode, const Tensor<T> &);

NULLSCAN_INSTANTIATE(float)
NULLSCAN_INSTANTIATE(double)
#undef NULLSCAN_INSTANTIATE

}  // namespace nullscan
