#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "nullscan/encoder.hpp"
#include "nullscan/model.hpp"

namespace nullscan {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char *kManifestFile = "manifest.json";
inline constexpr const char *kBlobFile = "tensors.bin";

struct CheckpointProvenance {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;  // 0 = untrained / not from a training run
  std::string dataset_manifest_hash;

  nlohmann::ordered_json to_json() const;
};

/// Builds a freshly initialised classifier from a persisted model config
/// ({"kind": "transformer", ...} or {"kind": "lstm", ...}). The tokenizer is
/// used by the transformer; the LSTM derives its own.
std::unique_ptr<Classifier> make_classifier(const nlohmann::ordered_json &model,
                                            const Tokenizer &tokenizer,
                                            RngState &rng);

/// Writes `dir/manifest.json` and `dir/tensors.bin` (little-endian float32,
/// row-major, in parameter order). BPE vocabulary files are copied into
/// `dir` so the checkpoint is self-contained.
void save_checkpoint(Classifier &model, const std::filesystem::path &dir,
                     const CheckpointProvenance &provenance = {});

struct LoadedCheckpoint {
  std::unique_ptr<Classifier> model;
  nlohmann::ordered_json manifest;
};

/// Validates the manifest against the model config and the blob before any
/// value is copied; throws CheckpointError on a version mismatch, a shape
/// mismatch, a truncated blob or an inconsistent tensor index.
LoadedCheckpoint load_checkpoint(const std::filesystem::path &dir);

nlohmann::ordered_json read_manifest(const std::filesystem::path &dir);

/// FNV-1a 64-bit digest as 16 hex digits.
std::string content_hash(std::string_view bytes);

// ---- external weights ------------------------------------------------------

struct SafetensorsEntry {
  std::string dtype;
  Shape shape;
  std::vector<float> values;  // F32 only
};

/// Reads every F32 tensor of a .safetensors file, keyed by name.
std::map<std::string, SafetensorsEntry> read_safetensors(
    const std::filesystem::path &path);

/// Maps RoBERTa-layout names (`roberta.embeddings.word_embeddings.weight`,
/// `encoder.layer.N.attention.self.query.weight`, ...) onto EncoderWeights.
/// Linear weights are transposed to [in, out]; position rows skip the two
/// reserved padding offsets and absorb the single token-type row.
EncoderWeights<float> import_roberta_encoder(
    const std::map<std::string, SafetensorsEntry> &tensors,
    const EncoderConfig &config);

}  // namespace nullscan
