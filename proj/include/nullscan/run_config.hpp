#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "nullscan/encoder.hpp"
#include "nullscan/lstm.hpp"
#include "nullscan/model.hpp"
#include "nullscan/train_eval.hpp"

namespace nullscan {

/// Training run configuration as read from a JSON file. Keys follow the
/// usual hyperparameter names (learning_rate, weight_decay,
/// num_train_epochs, batch_size, max_length, drop_out,
/// dense_output_dimension, max_vocab_size, ...); unknown keys are rejected.
struct RunConfig {
  std::string model = "transformer";  // transformer | lstm
  std::string encoder_preset = "codebert-base";
  std::optional<std::size_t> transformer_layers;
  PoolingMode pooling = PoolingMode::final_cls;
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  std::size_t num_train_epochs = 3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 42;
  std::size_t max_length = 512;
  double drop_out = 0.3;
  std::size_t dense_output_dimension = 512;
  nlohmann::ordered_json tokenizer = {{"kind", "fallback"}, {"vocab_size", 4096}};
  LstmConfig lstm;
  /// Optional .safetensors file with RoBERTa-layout encoder weights.
  std::filesystem::path init_weights;
  /// Directory that relative paths in the config resolve against.
  std::filesystem::path base_dir;

  static RunConfig from_json(const nlohmann::ordered_json &j,
                             const std::filesystem::path &base_dir = {});
  static RunConfig load(const std::filesystem::path &path);
  nlohmann::ordered_json to_json() const;

  TrainConfig train_config() const;
  Tokenizer make_tokenizer() const;
  /// Fresh model for `seed` (the run seed unless overridden), including the
  /// optional weight import.
  std::unique_ptr<Classifier> build(std::uint64_t seed) const;
};

}  // namespace nullscan
