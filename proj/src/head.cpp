#include "nullscan/head.hpp"

#include "nullscan/errors.hpp"

namespace nullscan {

using json = nlohmann::ordered_json;

void HeadConfig::validate() const {
  if (input_dim == 0) throw InputError("head input_dim must be positive");
  if (dense_dim == 0) throw InputError("head dense_dim must be positive");
  if (num_classes != 2) throw InputError("head num_classes must be 2");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw InputError("head dropout must be in [0, 1)");
}

json HeadConfig::to_json() const {
  return {{"input_dim", input_dim},
          {"dense_dim", dense_dim},
          {"num_classes", num_classes},
          {"dropout_p", dropout_p}};
}

HeadConfig HeadConfig::from_json(const json &j) {
  HeadConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.dense_dim = j.value("dense_dim", std::size_t{512});
  c.num_classes = j.value("num_classes", std::size_t{2});
  c.dropout_p = j.value("dropout_p", 0.3);
  c.validate();
  return c;
}

template <typename T>
HeadWeights<T> HeadWeights<T>::init(const HeadConfig &c, RngState &rng) {
  c.validate();
  HeadWeights w;
  w.dense_w = Parameter<T>("head.dense.weight",
                           normal_init<T>({c.input_dim, c.dense_dim}, 0.02, rng));
  w.dense_b = Parameter<T>("head.dense.bias", Tensor<T>::vector(c.dense_dim));
  w.classifier_w = Parameter<T>(
      "head.classifier.weight", normal_init<T>({c.dense_dim, 2}, 0.02, rng));
  w.classifier_b = Parameter<T>("head.classifier.bias", Tensor<T>::vector(2));
  return w;
}

template <typename T>
ParameterRefs<T> HeadWeights<T>::parameters() {
  return {&dense_w, &dense_b, &classifier_w, &classifier_b};
}

template <typename T>
void HeadWeights<T>::validate(const HeadConfig &c) const {
  require_shape(dense_w.shape(), {c.input_dim, c.dense_dim}, dense_w.name);
  require_shape(dense_b.shape(), {c.dense_dim}, dense_b.name);
  require_shape(classifier_w.shape(), {c.dense_dim, 2}, classifier_w.name);
  require_shape(classifier_b.shape(), {2}, classifier_b.name);
}

template <typename T>
Tensor<T> head_logits(const Tensor<T> &feature, const HeadWeights<T> &w,
                      const HeadConfig &config, Mode mode, RngState &rng,
                      HeadCache<T> *cache) {
  if (feature.size() != config.input_dim)
    throw ShapeError("head: feature has " + std::to_string(feature.size()) +
                     " entries, head expects " +
                     std::to_string(config.input_dim));
  const Tensor<T> row({1, feature.size()}, feature.values());
  Tensor<T> dropped = dropout(row, config.dropout_p, mode, rng,
                              cache ? &cache->drop : nullptr);
  Tensor<T> pre = dense_forward(dropped, w.dense_w.value, w.dense_b.value);
  Tensor<T> hidden = relu(pre);
  Tensor<T> logits =
      dense_forward(hidden, w.classifier_w.value, w.classifier_b.value);
  if (cache) {
    cache->dropped = std::move(dropped);
    cache->pre_relu = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return logits;
}

template <typename T>
VulnPrediction head_forward(const Tensor<T> &feature, const HeadWeights<T> &w,
                            const HeadConfig &config, Mode mode, RngState &rng) {
  const Tensor<T> logits = head_logits(feature, w, config, mode, rng);
  return make_prediction(static_cast<double>(logits[0]),
                         static_cast<double>(logits[1]));
}

template <typename T>
Tensor<T> head_backward(const HeadCache<T> &cache, HeadWeights<T> &w,
                        const Tensor<T> &grad_logits) {
  const Tensor<T> d_hidden =
      dense_backward(cache.hidden, w.classifier_w, w.classifier_b, grad_logits);
  const Tensor<T> d_pre = relu_backward(cache.pre_relu, d_hidden);
  const Tensor<T> d_dropped =
      dense_backward(cache.dropped, w.dense_w, w.dense_b, d_pre);
  const Tensor<T> d_row = dropout_backward(cache.drop, d_dropped);
  return Tensor<T>({d_row.size()}, d_row.values());
}

template <typename T>
CrossEntropyResult<T> training_loss(const Tensor<T> &logits, int label) {
  const Tensor<T> row({1, 2}, logits.values());
  const int labels[1] = {label};
  return cross_entropy(row, std::span<const int>(labels));
}

// ---- assembled model ------------------------------------------------------

template <typename T>
TransformerModel<T> TransformerModel<T>::init(const EncoderConfig &ec,
                                              PoolingMode pooling,
                                              std::size_t dense_dim,
                                              double head_dropout,
                                              RngState &rng) {
  TransformerModel m;
  m.encoder_config = ec;
  m.pooling = pooling;
  m.head_config = HeadConfig{pooled_dim(pooling, ec), dense_dim, 2, head_dropout};
  m.encoder = EncoderWeights<T>::init(ec, rng);
  m.head = HeadWeights<T>::init(m.head_config, rng);
  return m;
}

template <typename T>
ParameterRefs<T> TransformerModel<T>::parameters() {
  ParameterRefs<T> refs = encoder.parameters();
  for (Parameter<T> *p : head.parameters()) refs.push_back(p);
  return refs;
}

template <typename T>
void TransformerModel<T>::validate() const {
  encoder_config.validate();
  head_config.validate();
  encoder.validate(encoder_config);
  head.validate(head_config);
  if (head_config.input_dim != pooled_dim(pooling, encoder_config))
    throw ShapeError("head input_dim " + std::to_string(head_config.input_dim) +
                     " does not match pooled feature size " +
                     std::to_string(pooled_dim(pooling, encoder_config)));
}

template <typename T>
Tensor<T> model_logits(const TokenizedSample &sample,
                       const TransformerModel<T> &model, Mode mode,
                       RngState &rng, ModelTrace<T> *trace) {
  LayerActivations<T> acts =
      encode(sample, model.encoder, model.encoder_config, mode, rng,
             trace ? &trace->encoder : nullptr);
  const Tensor<T> feature = pool(acts, model.pooling);
  Tensor<T> logits = head_logits(feature, model.head, model.head_config, mode,
                                 rng, trace ? &trace->head : nullptr);
  if (trace) trace->activations = std::move(acts);
  return logits;
}

template <typename T>
VulnPrediction model_forward(const TokenizedSample &sample,
                             const TransformerModel<T> &model, Mode mode,
                             RngState &rng) {
  const Tensor<T> logits = model_logits(sample, model, mode, rng);
  return make_prediction(static_cast<double>(logits[0]),
                         static_cast<double>(logits[1]));
}

template <typename T>
T model_loss_backward(const TokenizedSample &sample, int label,
                      TransformerModel<T> &model, Mode mode, RngState &rng,
                      T loss_scale) {
  ModelTrace<T> trace;
  const Tensor<T> logits = model_logits(sample, model, mode, rng, &trace);
  CrossEntropyResult<T> ce = training_loss(logits, label);
  for (T &g : ce.grad.values()) g *= loss_scale;
  const Tensor<T> d_feature = head_backward(trace.head, model.head, ce.grad);
  encode_backward(trace.encoder, model.encoder, model.encoder_config,
                  pool_backward(trace.activations, model.pooling, d_feature));
  return ce.loss;
}

// ---- classifier wrapper ---------------------------------------------------

TransformerClassifier::TransformerClassifier(TransformerModel<float> model,
                                             Tokenizer tokenizer)
    : model_(std::move(model)), tokenizer_(std::move(tokenizer)) {
  model_.validate();
  if (tokenizer_.vocab_size() > model_.encoder_config.vocab_size)
    throw ShapeError("tokenizer vocabulary (" +
                     std::to_string(tokenizer_.vocab_size()) +
                     ") exceeds encoder vocab_size (" +
                     std::to_string(model_.encoder_config.vocab_size) + ")");
  if (tokenizer_.max_length() > model_.encoder_config.max_positions)
    throw ShapeError("tokenizer max_length exceeds encoder max_positions");
}

VulnPrediction TransformerClassifier::predict(
    const TokenizedSample &sample) const {
  RngState unused(0);
  return model_forward(sample, model_, Mode::eval, unused);
}

double TransformerClassifier::accumulate_gradients(
    const TokenizedSample &sample, int label, double loss_scale, RngState &rng) {
  return model_loss_backward(sample, label, model_, Mode::train, rng,
                             static_cast<float>(loss_scale));
}

json TransformerClassifier::config_json() const {
  return {{"kind", "transformer"},
          {"encoder", model_.encoder_config.to_json()},
          {"head", model_.head_config.to_json()},
          {"pooling", std::string(to_string(model_.pooling))}};
}

#define NULLSCAN_INSTANTIATE(T)                                                \
  template struct HeadWeights<T>;                                              \
  template struct TransformerModel<T>;                                         \
  template Tensor<T> head_logits(const Tensor<T> &, const HeadWeights<T> &,    \
                                 const HeadConfig &, Mode, RngState &,         \
                                 HeadCache<T> *);                              \
  template VulnPrediction head_forward(const Tensor<T> &,                      \
                                       const HeadWeights<T> &,                 \
                                       const HeadConfig &, Mode, RngState &);  \
  template Tensor<T> head_backward(const HeadCache<T> &, HeadWeights<T> &,     \
                                   const Tensor<T> &);                         \
  template CrossEntropyResult<T> training_loss(const Tensor<T> &, int);        \
  template Tensor<T> model_logits(const TokenizedSample &,                     \
                                  const TransformerModel<T> &, Mode,           \
                                  RngState &, ModelTrace<T> *);                \
  template VulnPrediction model_forward(const TokenizedSample &,               \
                                        const TransformerModel<T> &, Mode,     \
                                        RngState &);                           \
  template T model_loss_backward(const TokenizedSample &, int,                 \
                                 TransformerModel<T> &, Mode, RngState &, T);

NULLSCAN_INSTANTIATE(float)
NULLSCAN_INSTANTIATE(double)
#undef NULLSCAN_INSTANTIATE

}  // namespace nullscan
