#include "nullscan/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "nullscan/head.hpp"
#include "nullscan/lstm.hpp"

namespace nullscan {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path &path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to " + path.string());
}

void append_f32_le(std::string &out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float read_f32_le(const unsigned char *p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::uint64_t read_u64_le(const unsigned char *p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

Shape shape_from_json(const json &j, const std::string &what) {
  if (!j.is_array()) throw CheckpointError(what + ": shape is not an array");
  Shape s;
  for (const auto &d : j) {
    if (!d.is_number_unsigned())
      throw CheckpointError(what + ": shape entries must be non-negative integers");
    s.push_back(d.get<std::size_t>());
  }
  return s;
}

}  // namespace

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json CheckpointProvenance::to_json() const {
  return {{"seed", seed},
          {"epoch", epoch},
          {"dataset_manifest_hash", dataset_manifest_hash}};
}

std::unique_ptr<Classifier> make_classifier(const json &model,
                                            const Tokenizer &tokenizer,
                                            RngState &rng) {
  const std::string kind = model.value("kind", "");
  try {
    if (kind == "transformer") {
      const EncoderConfig ec = EncoderConfig::from_json(model.at("encoder"));
      const HeadConfig hc = HeadConfig::from_json(model.at("head"));
      const PoolingMode pooling =
          parse_pooling_mode(model.at("pooling").get<std::string>());
      if (ec.vocab_size != tokenizer.vocab_size())
        throw CheckpointError("encoder vocab_size " + std::to_string(ec.vocab_size) +
                              " does not match tokenizer vocab_size " +
                              std::to_string(tokenizer.vocab_size()));
      if (tokenizer.max_length() > ec.max_positions)
        throw CheckpointError("tokenizer max_length " +
                              std::to_string(tokenizer.max_length()) +
                              " exceeds encoder max_positions " +
                              std::to_string(ec.max_positions));
      auto m = TransformerModel<float>::init(ec, pooling, hc.dense_dim,
                                             hc.dropout_p, rng);
      if (m.head_config.input_dim != hc.input_dim)
        throw CheckpointError("head input_dim " + std::to_string(hc.input_dim) +
                              " does not match pooled dimension " +
                              std::to_string(m.head_config.input_dim));
      return std::make_unique<TransformerClassifier>(std::move(m), tokenizer);
    }
    if (kind == "lstm") {
      const LstmConfig lc = LstmConfig::from_json(model.at("lstm"));
      return std::make_unique<LstmClassifier>(LstmClassifier::create(lc, rng));
    }
  } catch (const json::exception &e) {
    throw CheckpointError(std::string("malformed model config: ") + e.what());
  }
  throw CheckpointError("unknown model kind '" + kind + "'");
}

void save_checkpoint(Classifier &model, const fs::path &dir,
                     const CheckpointProvenance &provenance) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CheckpointError("cannot create " + dir.string() + ": " + ec.message());

  const Tokenizer &tok = model.tokenizer();
  if (tok.is_bpe()) {
    for (const fs::path &src : {tok.bpe_vocab_path(), tok.bpe_merges_path()}) {
      const fs::path dst = dir / src.filename();
      if (fs::exists(dst) && fs::equivalent(src, dst)) continue;
      fs::copy_file(src, dst, fs::copy_options::overwrite_existing, ec);
      if (ec) throw CheckpointError("cannot copy " + src.string() + ": " + ec.message());
    }
  }

  std::string blob;
  json index = json::array();
  for (const Parameter<float> *p : model.parameters()) {
    const std::size_t offset = blob.size();
    for (float v : p->value.values()) append_f32_le(blob, v);
    index.push_back({{"name", p->name},
                     {"dtype", "float32"},
                     {"shape", p->shape()},
                     {"offset", offset},
                     {"length", blob.size() - offset}});
  }

  json manifest;
  manifest["format"] = "nullscan-checkpoint";
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["model"] = model.config_json();
  manifest["tokenizer"] = tok.to_json();
  manifest["blob"] = {{"file", kBlobFile},
                      {"bytes", blob.size()},
                      {"hash", content_hash(blob)}};
  manifest["tensors"] = std::move(index);
  manifest["provenance"] = provenance.to_json();

  write_file(dir / kBlobFile, blob);
  write_file(dir / kManifestFile, manifest.dump(2) + "\n");
}

json read_manifest(const fs::path &dir) {
  const fs::path path = dir / kManifestFile;
  if (!fs::exists(path)) throw CheckpointError("no checkpoint manifest at " + path.string());
  json manifest;
  try {
    manifest = json::parse(read_file(path));
  } catch (const json::parse_error &e) {
    throw CheckpointError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("format_version"))
    throw CheckpointError("manifest " + path.string() + " has no format_version");
  if (manifest["format_version"] != kCheckpointFormatVersion)
    throw CheckpointError("unsupported checkpoint format version " +
                          manifest["format_version"].dump() + " (expected " +
                          std::to_string(kCheckpointFormatVersion) + ")");
  return manifest;
}

LoadedCheckpoint load_checkpoint(const fs::path &dir) {
  json manifest = read_manifest(dir);
  for (const char *key : {"model", "tokenizer", "blob", "tensors"})
    if (!manifest.contains(key))
      throw CheckpointError(std::string("manifest is missing '") + key + "'");

  Tokenizer tokenizer = [&] {
    try {
      return Tokenizer::from_json(manifest["tokenizer"], dir);
    } catch (const json::exception &e) {
      throw CheckpointError(std::string("malformed tokenizer config: ") + e.what());
    }
  }();
  RngState scratch(0);
  auto model = make_classifier(manifest["model"], tokenizer, scratch);

  const json &blob_info = manifest["blob"];
  const std::string blob =
      read_file(dir / blob_info.value("file", std::string(kBlobFile)));
  const auto declared = blob_info.value("bytes", std::size_t{0});
  if (blob.size() < declared)
    throw CheckpointError("truncated blob: " + std::to_string(blob.size()) +
                          " bytes on disk, manifest declares " +
                          std::to_string(declared));
  if (blob.size() != declared)
    throw CheckpointError("blob size " + std::to_string(blob.size()) +
                          " does not match manifest (" + std::to_string(declared) + ")");
  if (blob_info.contains("hash") && blob_info["hash"] != content_hash(blob))
    throw CheckpointError("blob hash mismatch: manifest declares " + blob_info["hash"].dump() +
                          ", file hashes to \"" + content_hash(blob) + "\"");

  struct Slot {
    Parameter<float> *param;
    std::size_t offset;
  };
  std::map<std::string, Parameter<float> *> by_name;
  for (Parameter<float> *p : model->parameters()) by_name.emplace(p->name, p);
  std::vector<Slot> slots;
  std::set<std::string> seen;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (const json &t : manifest["tensors"]) {
    const std::string name = t.value("name", "");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw CheckpointError("tensor '" + name + "' is not a parameter of this model");
    if (!seen.insert(name).second)
      throw CheckpointError("tensor '" + name + "' appears more than once");
    if (t.value("dtype", "") != "float32")
      throw CheckpointError("tensor '" + name + "' has unsupported dtype " +
                            t.value("dtype", std::string("?")));
    const Shape shape = shape_from_json(t.at("shape"), name);
    if (shape != it->second->shape())
      throw CheckpointError("shape mismatch for '" + name + "': checkpoint " +
                            shape_string(shape) + ", model expects " +
                            shape_string(it->second->shape()));
    const auto offset = t.value("offset", std::size_t{0});
    const auto length = t.value("length", std::size_t{0});
    if (length != element_count(shape) * 4)
      throw CheckpointError("tensor '" + name + "' length " + std::to_string(length) +
                            " does not match its shape");
    if (offset % 4 != 0 || offset > blob.size() || length > blob.size() - offset)
      throw CheckpointError("tensor '" + name + "' range [" + std::to_string(offset) +
                            ", +" + std::to_string(length) + ") is outside the blob");
    ranges.emplace_back(offset, offset + length);
    slots.push_back({it->second, offset});
  }
  if (seen.size() != by_name.size()) {
    for (const auto &[name, p] : by_name)
      if (!seen.count(name))
        throw CheckpointError("checkpoint is missing tensor '" + name + "'");
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i)
    if (ranges[i].first < ranges[i - 1].second)
      throw CheckpointError("tensor index has overlapping byte ranges at offset " +
                            std::to_string(ranges[i].first));

  // All checks passed; only now are values copied.
  const auto *bytes = reinterpret_cast<const unsigned char *>(blob.data());
  for (const Slot &s : slots) {
    auto &dst = s.param->value.values();
    for (std::size_t j = 0; j < dst.size(); ++j)
      dst[j] = read_f32_le(bytes + s.offset + 4 * j);
    if (!s.param->value.all_finite())
      throw CheckpointError("tensor '" + s.param->name + "' contains non-finite values");
  }
  return {std::move(model), std::move(manifest)};
}

// ---- external weights ------------------------------------------------------

std::map<std::string, SafetensorsEntry> read_safetensors(const fs::path &path) {
  const std::string data = read_file(path);
  const auto *bytes = reinterpret_cast<const unsigned char *>(data.data());
  if (data.size() < 8) throw CheckpointError(path.string() + ": not a safetensors file");
  const std::uint64_t header_len = read_u64_le(bytes);
  if (header_len > data.size() - 8)
    throw CheckpointError(path.string() + ": header length exceeds file size");
  json header;
  try {
    header = json::parse(data.substr(8, header_len));
  } catch (const json::parse_error &e) {
    throw CheckpointError(path.string() + ": malformed header: " + e.what());
  }
  const std::size_t base = 8 + header_len;
  std::map<std::string, SafetensorsEntry> out;
  for (const auto &[name, info] : header.items()) {
    if (name == "__metadata__") continue;
    SafetensorsEntry e;
    e.dtype = info.at("dtype").get<std::string>();
    e.shape = shape_from_json(info.at("shape"), name);
    if (e.dtype != "F32") {
      out.emplace(name, std::move(e));  // listed but not loaded
      continue;
    }
    const auto begin = info.at("data_offsets").at(0).get<std::size_t>();
    const auto end = info.at("data_offsets").at(1).get<std::size_t>();
    if (end < begin || end > data.size() - base ||
        end - begin != element_count(e.shape) * 4)
      throw CheckpointError(path.string() + ": bad data_offsets for " + name);
    e.values.resize(element_count(e.shape));
    for (std::size_t i = 0; i < e.values.size(); ++i)
      e.values[i] = read_f32_le(bytes + base + begin + 4 * i);
    out.emplace(name, std::move(e));
  }
  return out;
}

EncoderWeights<float> import_roberta_encoder(
    const std::map<std::string, SafetensorsEntry> &tensors,
    const EncoderConfig &config) {
  config.validate();
  auto find = [&](const std::string &name) -> const SafetensorsEntry & {
    for (const std::string prefix : {"roberta.", "", "model."}) {
      auto it = tensors.find(prefix + name);
      if (it != tensors.end()) {
        if (it->second.dtype != "F32")
          throw CheckpointError(name + ": only F32 tensors can be imported, got " +
                                it->second.dtype);
        return it->second;
      }
    }
    throw CheckpointError("external weights lack '" + name + "'");
  };
  auto copy = [&](Parameter<float> &dst, const std::string &name) {
    const SafetensorsEntry &src = find(name);
    if (src.shape != dst.shape())
      throw CheckpointError("shape mismatch importing '" + name + "': " +
                            shape_string(src.shape) + " vs " + shape_string(dst.shape()));
    dst.value.values() = src.values;
  };
  // Linear layers are stored [out, in]; ours are [in, out].
  auto copy_transposed = [&](Parameter<float> &dst, const std::string &name) {
    const SafetensorsEntry &src = find(name);
    const Shape want{dst.shape()[1], dst.shape()[0]};
    if (src.shape != want)
      throw CheckpointError("shape mismatch importing '" + name + "': " +
                            shape_string(src.shape) + " vs " + shape_string(want));
    const std::size_t out = want[0], in = want[1];
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < in; ++i) dst.value(i, o) = src.values[o * in + i];
  };

  RngState scratch(0);
  EncoderWeights<float> w = EncoderWeights<float>::init(config, scratch);
  copy(w.token_embedding, "embeddings.word_embeddings.weight");
  {
    const SafetensorsEntry &pos = find("embeddings.position_embeddings.weight");
    const SafetensorsEntry &type = find("embeddings.token_type_embeddings.weight");
    const std::size_t h = config.hidden_dim;
    constexpr std::size_t kReservedRows = 2;
    if (pos.shape.size() != 2 || pos.shape[1] != h ||
        pos.shape[0] < config.max_positions + kReservedRows)
      throw CheckpointError("position embeddings " + shape_string(pos.shape) +
                            " cannot cover " + std::to_string(config.max_positions) +
                            " positions");
    if (type.shape.size() != 2 || type.shape[1] != h || type.shape[0] < 1)
      throw CheckpointError("token type embeddings have shape " + shape_string(type.shape));
    for (std::size_t r = 0; r < config.max_positions; ++r)
      for (std::size_t c = 0; c < h; ++c)
        w.position_embedding.value(r, c) =
            pos.values[(r + kReservedRows) * h + c] + type.values[c];
  }
  copy(w.embed_norm_gamma, "embeddings.LayerNorm.weight");
  copy(w.embed_norm_beta, "embeddings.LayerNorm.bias");
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    auto &L = w.layers[l];
    const std::string p = "encoder.layer." + std::to_string(l) + ".";
    copy_transposed(L.query_w, p + "attention.self.query.weight");
    copy(L.query_b, p + "attention.self.query.bias");
    copy_transposed(L.key_w, p + "attention.self.key.weight");
    copy(L.key_b, p + "attention.self.key.bias");
    copy_transposed(L.value_w, p + "attention.self.value.weight");
    copy(L.value_b, p + "attention.self.value.bias");
    copy_transposed(L.attn_out_w, p + "attention.output.dense.weight");
    copy(L.attn_out_b, p + "attention.output.dense.bias");
    copy(L.attn_norm_gamma, p + "attention.output.LayerNorm.weight");
    copy(L.attn_norm_beta, p + "attention.output.LayerNorm.bias");
    copy_transposed(L.ffn_in_w, p + "intermediate.dense.weight");
    copy(L.ffn_in_b, p + "intermediate.dense.bias");
    copy_transposed(L.ffn_out_w, p + "output.dense.weight");
    copy(L.ffn_out_b, p + "output.dense.bias");
    copy(L.ffn_norm_gamma, p + "output.LayerNorm.weight");
    copy(L.ffn_norm_beta, p + "output.LayerNorm.bias");
  }
  w.validate(config);
  return w;
}

}  // namespace nullscan
