#include "nullscan/lstm.hpp"

#include <cmath>

#include "nullscan/errors.hpp"

namespace nullscan {

using json = nlohmann::ordered_json;

void LstmConfig::validate() const {
  if (max_vocab_size <= static_cast<std::size_t>(FallbackVocab::kFirstFreeId))
    throw InputError("lstm max_vocab_size too small");
  if (max_sequence_length < 1)
    throw InputError("lstm max_sequence_length must be >= 1");
  if (embedding_dim == 0 || dense_units == 0 || units.empty())
    throw InputError("lstm dimensions must be positive");
  for (std::size_t u : units)
    if (u == 0) throw InputError("lstm unit sizes must be positive");
}

json LstmConfig::to_json() const {
  return {{"max_vocab_size", max_vocab_size},
          {"max_sequence_length", max_sequence_length},
          {"embedding_dim", embedding_dim},
          {"units", units},
          {"dense_units", dense_units}};
}

LstmConfig LstmConfig::from_json(const json &j) {
  LstmConfig c;
  c.max_vocab_size = j.value("max_vocab_size", c.max_vocab_size);
  c.max_sequence_length = j.value("max_sequence_length", c.max_sequence_length);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  if (j.contains("units")) c.units = j.at("units").get<std::vector<std::size_t>>();
  c.dense_units = j.value("dense_units", c.dense_units);
  c.validate();
  return c;
}

template <typename T>
LstmWeights<T> LstmWeights<T>::init(const LstmConfig &c, RngState &rng) {
  c.validate();
  LstmWeights w;
  w.embedding = Parameter<T>(
      "lstm.embedding",
      normal_init<T>({c.max_vocab_size, c.embedding_dim}, 0.02, rng));
  std::size_t in = c.embedding_dim;
  for (std::size_t l = 0; l < c.units.size(); ++l) {
    const std::size_t h = c.units[l];
    const std::string p = "lstm.layers." + std::to_string(l) + ".";
    LstmLayerWeights<T> layer;
    layer.input_w =
        Parameter<T>(p + "input_weight", normal_init<T>({in, 4 * h}, 0.02, rng));
    layer.recurrent_w = Parameter<T>(p + "recurrent_weight",
                                     normal_init<T>({h, 4 * h}, 0.02, rng));
    Tensor<T> bias = Tensor<T>::vector(4 * h);
    for (std::size_t j = h; j < 2 * h; ++j) bias[j] = T{1};
    layer.bias = Parameter<T>(p + "bias", std::move(bias));
    w.layers.push_back(std::move(layer));
    in = h;
  }
  w.dense_w = Parameter<T>("lstm.dense.weight",
                           normal_init<T>({in, c.dense_units}, 0.02, rng));
  w.dense_b = Parameter<T>("lstm.dense.bias", Tensor<T>::vector(c.dense_units));
  w.classifier_w = Parameter<T>("lstm.classifier.weight",
                                normal_init<T>({c.dense_units, 2}, 0.02, rng));
  w.classifier_b = Parameter<T>("lstm.classifier.bias", Tensor<T>::vector(2));
  return w;
}

template <typename T>
ParameterRefs<T> LstmWeights<T>::parameters() {
  ParameterRefs<T> refs{&embedding};
  for (auto &l : layers) {
    refs.push_back(&l.input_w);
    refs.push_back(&l.recurrent_w);
    refs.push_back(&l.bias);
  }
  refs.insert(refs.end(), {&dense_w, &dense_b, &classifier_w, &classifier_b});
  return refs;
}

template <typename T>
void LstmWeights<T>::validate(const LstmConfig &c) const {
  require_shape(embedding.shape(), {c.max_vocab_size, c.embedding_dim},
                embedding.name);
  if (layers.size() != c.units.size())
    throw ShapeError("lstm layer count does not match config");
  std::size_t in = c.embedding_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t h = c.units[l];
    require_shape(layers[l].input_w.shape(), {in, 4 * h}, layers[l].input_w.name);
    require_shape(layers[l].recurrent_w.shape(), {h, 4 * h},
                  layers[l].recurrent_w.name);
    require_shape(layers[l].bias.shape(), {4 * h}, layers[l].bias.name);
    in = h;
  }
  require_shape(dense_w.shape(), {in, c.dense_units}, dense_w.name);
  require_shape(dense_b.shape(), {c.dense_units}, dense_b.name);
  require_shape(classifier_w.shape(), {c.dense_units, 2}, classifier_w.name);
  require_shape(classifier_b.shape(), {2}, classifier_b.name);
}

template <typename T>
LstmState<T> lstm_cell_step(std::span<const T> x, std::span<const T> h_prev,
                            std::span<const T> c_prev,
                            const LstmLayerWeights<T> &w,
                            LstmStepCache<T> *cache) {
  const std::size_t in = w.input_dim(), h = w.units();
  if (x.size() != in || h_prev.size() != h || c_prev.size() != h)
    throw ShapeError("lstm_cell_step: input " + std::to_string(x.size()) +
                     "/state " + std::to_string(h_prev.size()) +
                     " vs layer (" + std::to_string(in) + ", " +
                     std::to_string(h) + ")");
  std::vector<T> z(w.bias.value.values());
  const T *wx = w.input_w.value.data();
  for (std::size_t r = 0; r < in; ++r) {
    const T xv = x[r];
    if (xv == T{0}) continue;
    const T *row = wx + r * 4 * h;
    for (std::size_t j = 0; j < 4 * h; ++j) z[j] += xv * row[j];
  }
  const T *wh = w.recurrent_w.value.data();
  for (std::size_t r = 0; r < h; ++r) {
    const T hv = h_prev[r];
    if (hv == T{0}) continue;
    const T *row = wh + r * 4 * h;
    for (std::size_t j = 0; j < 4 * h; ++j) z[j] += hv * row[j];
  }
  LstmState<T> out{std::vector<T>(h), std::vector<T>(h)};
  std::vector<T> gi(h), gf(h), gg(h), go(h), tc(h);
  for (std::size_t j = 0; j < h; ++j) {
    gi[j] = sigmoid(z[j]);
    gf[j] = sigmoid(z[h + j]);
    gg[j] = std::tanh(z[2 * h + j]);
    go[j] = sigmoid(z[3 * h + j]);
    out.c[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
    tc[j] = std::tanh(out.c[j]);
    out.h[j] = go[j] * tc[j];
  }
  if (cache) {
    cache->x.assign(x.begin(), x.end());
    cache->h_prev.assign(h_prev.begin(), h_prev.end());
    cache->c_prev.assign(c_prev.begin(), c_prev.end());
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->g = std::move(gg);
    cache->o = std::move(go);
    cache->c = out.c;
    cache->tanh_c = std::move(tc);
  }
  return out;
}

template <typename T>
LstmStepGrads<T> lstm_cell_backward(const LstmStepCache<T> &cache,
                                    LstmLayerWeights<T> &w,
                                    std::span<const T> dh,
                                    std::span<const T> dc_next) {
  const std::size_t in = w.input_dim(), h = w.units();
  std::vector<T> dz(4 * h);
  LstmStepGrads<T> out{std::vector<T>(in), std::vector<T>(h), std::vector<T>(h)};
  for (std::size_t j = 0; j < h; ++j) {
    const T o = cache.o[j], i = cache.i[j], f = cache.f[j], g = cache.g[j];
    const T tc = cache.tanh_c[j];
    const T d_o = dh[j] * tc;
    const T dc = dc_next[j] + dh[j] * o * (T{1} - tc * tc);
    dz[j] = dc * g * i * (T{1} - i);
    dz[h + j] = dc * cache.c_prev[j] * f * (T{1} - f);
    dz[2 * h + j] = dc * i * (T{1} - g * g);
    dz[3 * h + j] = d_o * o * (T{1} - o);
    out.dc_prev[j] = dc * f;
  }
  T *gw = w.input_w.grad.data();
  const T *vw = w.input_w.value.data();
  for (std::size_t r = 0; r < in; ++r) {
    T *grow = gw + r * 4 * h;
    const T *vrow = vw + r * 4 * h;
    T acc{0};
    for (std::size_t j = 0; j < 4 * h; ++j) {
      grow[j] += cache.x[r] * dz[j];
      acc += vrow[j] * dz[j];
    }
    out.dx[r] = acc;
  }
  T *gu = w.recurrent_w.grad.data();
  const T *vu = w.recurrent_w.value.data();
  for (std::size_t r = 0; r < h; ++r) {
    T *grow = gu + r * 4 * h;
    const T *vrow = vu + r * 4 * h;
    T acc{0};
    for (std::size_t j = 0; j < 4 * h; ++j) {
      grow[j] += cache.h_prev[r] * dz[j];
      acc += vrow[j] * dz[j];
    }
    out.dh_prev[r] = acc;
  }
  for (std::size_t j = 0; j < 4 * h; ++j) w.bias.grad[j] += dz[j];
  return out;
}

template <typename T>
Tensor<T> lstm_logits(std::span<const TokenId> ids, const LstmWeights<T> &w,
                      const LstmConfig &config, LstmTrace<T> *trace) {
  if (ids.size() > config.max_sequence_length)
    ids = ids.first(config.max_sequence_length);
  std::vector<std::vector<T>> seq;
  seq.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.max_vocab_size)
      throw InputError("token id " + std::to_string(id) +
                       " outside lstm vocabulary");
    const auto row = w.embedding.value.row(static_cast<std::size_t>(id));
    seq.emplace_back(row.begin(), row.end());
  }
  if (trace) {
    *trace = LstmTrace<T>{};
    trace->ids.assign(ids.begin(), ids.end());
    trace->steps.resize(w.layers.size());
  }
  std::vector<T> last;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const std::size_t h = w.layers[l].units();
    LstmState<T> state{std::vector<T>(h), std::vector<T>(h)};
    std::vector<std::vector<T>> outputs;
    outputs.reserve(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) {
      LstmStepCache<T> *cache = nullptr;
      if (trace) cache = &trace->steps[l].emplace_back();
      state = lstm_cell_step<T>(seq[t], state.h, state.c, w.layers[l], cache);
      outputs.push_back(state.h);
    }
    last = state.h;
    seq = std::move(outputs);
  }
  const Tensor<T> hidden({1, last.size()}, last);
  Tensor<T> pre = dense_forward(hidden, w.dense_w.value, w.dense_b.value);
  Tensor<T> act = relu(pre);
  Tensor<T> logits = dense_forward(act, w.classifier_w.value, w.classifier_b.value);
  if (trace) {
    trace->last_hidden = std::move(last);
    trace->pre_relu = std::move(pre);
    trace->dense_out = std::move(act);
  }
  return logits;
}

template <typename T>
VulnPrediction lstm_classify(std::span<const TokenId> ids,
                             const LstmWeights<T> &w, const LstmConfig &config) {
  const Tensor<T> logits = lstm_logits(ids, w, config);
  return make_prediction(static_cast<double>(logits[0]),
                         static_cast<double>(logits[1]));
}

template <typename T>
T lstm_loss_backward(std::span<const TokenId> ids, int label,
                     LstmWeights<T> &w, const LstmConfig &config,
                     T loss_scale) {
  LstmTrace<T> trace;
  const Tensor<T> logits = lstm_logits(ids, w, config, &trace);
  const Tensor<T> row({1, 2}, logits.values());
  const int labels[1] = {label};
  CrossEntropyResult<T> ce = cross_entropy(row, std::span<const int>(labels));
  for (T &g : ce.grad.values()) g *= loss_scale;

  const Tensor<T> d_act =
      dense_backward(trace.dense_out, w.classifier_w, w.classifier_b, ce.grad);
  const Tensor<T> d_pre = relu_backward(trace.pre_relu, d_act);
  const Tensor<T> hidden({1, trace.last_hidden.size()}, trace.last_hidden);
  const Tensor<T> d_hidden = dense_backward(hidden, w.dense_w, w.dense_b, d_pre);

  const std::size_t steps = trace.ids.size();
  if (steps == 0) return ce.loss;
  // dL/d(output of layer l at t); only the last step of the top layer
  // receives the head gradient.
  std::vector<std::vector<T>> d_out(steps);
  const std::size_t top = w.layers.size() - 1;
  for (std::size_t t = 0; t < steps; ++t)
    d_out[t].assign(w.layers[top].units(), T{0});
  d_out[steps - 1] = d_hidden.values();

  for (std::size_t l = w.layers.size(); l-- > 0;) {
    const std::size_t h = w.layers[l].units();
    std::vector<T> dh_next(h, T{0}), dc_next(h, T{0});
    std::vector<std::vector<T>> d_in(steps);
    for (std::size_t t = steps; t-- > 0;) {
      std::vector<T> dh(h);
      for (std::size_t j = 0; j < h; ++j) dh[j] = d_out[t][j] + dh_next[j];
      LstmStepGrads<T> g =
          lstm_cell_backward<T>(trace.steps[l][t], w.layers[l], dh, dc_next);
      dh_next = std::move(g.dh_prev);
      dc_next = std::move(g.dc_prev);
      d_in[t] = std::move(g.dx);
    }
    d_out = std::move(d_in);
  }
  for (std::size_t t = 0; t < steps; ++t) {
    auto grow = w.embedding.grad.row(static_cast<std::size_t>(trace.ids[t]));
    for (std::size_t j = 0; j < grow.size(); ++j) grow[j] += d_out[t][j];
  }
  return ce.loss;
}

// ---- classifier wrapper ---------------------------------------------------

std::span<const TokenId> content_ids(const TokenizedSample &sample) {
  if (sample.true_length < 2) return {};
  return std::span<const TokenId>(sample.token_ids)
      .subspan(1, sample.true_length - 2);
}

LstmClassifier::LstmClassifier(LstmConfig config, LstmWeights<float> weights)
    : config_(std::move(config)),
      weights_(std::move(weights)),
      tokenizer_(Tokenizer::fallback(FallbackVocab{config_.max_vocab_size, {}},
                                     config_.max_sequence_length + 2)) {
  config_.validate();
  weights_.validate(config_);
}

LstmClassifier LstmClassifier::create(const LstmConfig &config, RngState &rng) {
  return LstmClassifier(config, LstmWeights<float>::init(config, rng));
}

VulnPrediction LstmClassifier::predict(const TokenizedSample &sample) const {
  return lstm_classify(content_ids(sample), weights_, config_);
}

double LstmClassifier::accumulate_gradients(const TokenizedSample &sample,
                                            int label, double loss_scale,
                                            RngState &) {
  return lstm_loss_backward(content_ids(sample), label, weights_, config_,
                            static_cast<float>(loss_scale));
}

json LstmClassifier::config_json() const {
  return {{"kind", "lstm"}, {"lstm", config_.to_json()}};
}

#define NULLSCAN_INSTANTIATE(T)                                                \
  template struct LstmWeights<T>;                                              \
  template LstmState<T> lstm_cell_step(std::span<const T>, std::span<const T>, \
                                       std::span<const T>,                     \
                                       const LstmLayerWeights<T> &,            \
                                       LstmStepCache<T> *);                    \
  template LstmStepGrads<T> lstm_cell_backward(                                \
      const LstmStepCache<T> &, LstmLayerWeights<T> &, std::span<const T>,     \
      std::span<const T>);                                                     \
  template Tensor<T> lstm_logits(std::span<const TokenId>,                     \
                                 const LstmWeights<T> &, const LstmConfig &,   \
                                 LstmTrace<T> *);                              \
  template VulnPrediction lstm_classify(std::span<const TokenId>,              \
                                        const LstmWeights<T> &,                \
                                        const LstmConfig &);                   \
  template T lstm_loss_backward(std::span<const TokenId>, int,                 \
                                LstmWeights<T> &, const LstmConfig &, T);

NULLSCAN_INSTANTIATE(float)
NULLSCAN_INSTANTIATE(double)
#undef NULLSCAN_INSTANTIATE

}  // namespace nullscan
