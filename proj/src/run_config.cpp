#include "nullscan/run_config.hpp"

#include <fstream>
#include <set>

#include "nullscan/checkpoint.hpp"
#include "nullscan/head.hpp"

namespace nullscan {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

template <typename V>
void take(const json &j, const char *key, V &out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception &) {
    throw InputError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json &j, const fs::path &base_dir) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  static const std::set<std::string, std::less<>> kKnown = {
      "model", "encoder_preset", "transformer_layers", "pooling",
      "learning_rate", "weight_decay", "num_train_epochs", "batch_size",
      "seed", "max_length", "drop_out", "dense_output_dimension", "tokenizer",
      "max_vocab_size", "max_sequence_length", "embedding_dim", "units",
      "dense_units", "init_weights"};
  for (const auto &[key, value] : j.items())
    if (!kKnown.count(key)) throw InputError("unknown config key '" + key + "'");

  RunConfig c;
  c.base_dir = base_dir;
  take(j, "model", c.model);
  take(j, "encoder_preset", c.encoder_preset);
  if (j.contains("transformer_layers")) {
    std::size_t layers = 0;
    take(j, "transformer_layers", layers);
    c.transformer_layers = layers;
  }
  if (j.contains("pooling")) {
    std::string pooling;
    take(j, "pooling", pooling);
    c.pooling = parse_pooling_mode(pooling);
  }
  take(j, "learning_rate", c.learning_rate);
  take(j, "weight_decay", c.weight_decay);
  take(j, "num_train_epochs", c.num_train_epochs);
  take(j, "batch_size", c.batch_size);
  take(j, "seed", c.seed);
  take(j, "max_length", c.max_length);
  take(j, "drop_out", c.drop_out);
  take(j, "dense_output_dimension", c.dense_output_dimension);
  if (j.contains("tokenizer")) c.tokenizer = j.at("tokenizer");
  take(j, "max_vocab_size", c.lstm.max_vocab_size);
  take(j, "max_sequence_length", c.lstm.max_sequence_length);
  take(j, "embedding_dim", c.lstm.embedding_dim);
  take(j, "units", c.lstm.units);
  take(j, "dense_units", c.lstm.dense_units);
  std::string init;
  take(j, "init_weights", init);
  if (!init.empty()) {
    c.init_weights = init;
    if (c.init_weights.is_relative() && !base_dir.empty())
      c.init_weights = base_dir / c.init_weights;
  }

  if (c.model != "transformer" && c.model != "lstm")
    throw InputError("model must be 'transformer' or 'lstm', got '" + c.model + "'");
  if (c.max_length < 2) throw InputError("max_length must be >= 2");
  if (!(c.drop_out >= 0.0 && c.drop_out < 1.0))
    throw InputError("drop_out must be in [0, 1)");
  if (c.dense_output_dimension == 0)
    throw InputError("dense_output_dimension must be >= 1");
  c.lstm.validate();
  c.train_config().validate();
  return c;
}

RunConfig RunConfig::load(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error &e) {
    throw InputError("malformed config " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json RunConfig::to_json() const {
  json j;
  j["model"] = model;
  if (model == "transformer") {
    j["encoder_preset"] = encoder_preset;
    if (transformer_layers) j["transformer_layers"] = *transformer_layers;
    j["pooling"] = std::string(to_string(pooling));
    j["max_length"] = max_length;
    j["drop_out"] = drop_out;
    j["dense_output_dimension"] = dense_output_dimension;
    j["tokenizer"] = tokenizer;
    if (!init_weights.empty()) j["init_weights"] = init_weights.string();
  } else {
    j["max_vocab_size"] = lstm.max_vocab_size;
    j["max_sequence_length"] = lstm.max_sequence_length;
    j["embedding_dim"] = lstm.embedding_dim;
    j["units"] = lstm.units;
    j["dense_units"] = lstm.dense_units;
  }
  j["learning_rate"] = learning_rate;
  j["weight_decay"] = weight_decay;
  j["num_train_epochs"] = num_train_epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  return j;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.weight_decay = weight_decay;
  t.epochs = num_train_epochs;
  t.batch_size = batch_size;
  t.seed = seed;
  return t;
}

Tokenizer RunConfig::make_tokenizer() const {
  json tok = tokenizer;
  tok["max_length"] = max_length;
  return Tokenizer::from_json(tok, base_dir);
}

std::unique_ptr<Classifier> RunConfig::build(std::uint64_t model_seed) const {
  RngState rng(model_seed);
  if (model == "lstm")
    return std::make_unique<LstmClassifier>(LstmClassifier::create(lstm, rng));
  Tokenizer tok = make_tokenizer();
  EncoderConfig ec = EncoderConfig::preset(encoder_preset, tok.vocab_size());
  if (transformer_layers) ec.num_layers = *transformer_layers;
  if (tok.max_length() > ec.max_positions)
    throw InputError("max_length " + std::to_string(tok.max_length()) +
                     " exceeds the encoder's " + std::to_string(ec.max_positions) +
                     " positions");
  auto m = TransformerModel<float>::init(ec, pooling, dense_output_dimension,
                                         drop_out, rng);
  if (!init_weights.empty())
    m.encoder = import_roberta_encoder(read_safetensors(init_weights), ec);
  return std::make_unique<TransformerClassifier>(std::move(m), std::move(tok));
}

}  // namespace nullscan
