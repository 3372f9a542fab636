#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"

namespace nullscan {

using TokenId = std::int32_t;

struct SpecialTokens {
  TokenId bos = 0;
  TokenId pad = 1;
  TokenId eos = 2;
  TokenId unk = 3;
  TokenId mask = 4;
};

/// Fixed-length encoder input. Positions >= true_length hold the pad id and
/// have mask 0; everything before has mask 1.
struct TokenizedSample {
  std::vector<TokenId> token_ids;
  std::vector<std::uint8_t> attention_mask;
  std::size_t true_length = 0;

  std::size_t max_length() const noexcept { return token_ids.size(); }
  friend bool operator==(const TokenizedSample &,
                         const TokenizedSample &) = default;
};

/// Pads/truncates `content` (special tokens excluded) into a sample with bos
/// and eos. Truncation keeps the head of the content.
TokenizedSample frame_tokens(std::span<const TokenId> content,
                             const SpecialTokens &specials,
                             std::size_t max_length);

// ---- byte-level BPE -------------------------------------------------------

/// Byte-level BPE vocabulary in the RoBERTa/CodeBERT file layout
/// (vocab.json + merges.txt). Immutable once built.
class BpeVocab {
 public:
  static constexpr std::string_view kBos = "<s>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kMask = "<mask>";

  static BpeVocab load(const std::filesystem::path &vocab_path,
                       const std::filesystem::path &merges_path);
  static BpeVocab parse(std::string_view vocab_json,
                        std::string_view merges_text);
  static BpeVocab from_parts(
      std::unordered_map<std::string, TokenId> token_to_id,
      std::vector<std::pair<std::string, std::string>> merges);

  std::size_t size() const noexcept { return token_to_id_.size(); }
  const SpecialTokens &specials() const noexcept { return specials_; }
  const std::vector<std::pair<std::string, std::string>> &merges() const {
    return merges_;
  }
  /// Returns the unk id when `token` is not in the vocabulary.
  TokenId id_of(const std::string &token) const;
  bool contains(const std::string &token) const {
    return token_to_id_.contains(token);
  }
  /// Rank of a merge (lower merges first), or -1 when absent.
  std::int64_t merge_rank(const std::string &left,
                          const std::string &right) const;

  /// BPE over one pre-tokenized word given as byte-mapped symbols.
  std::vector<std::string> apply_merges(std::vector<std::string> symbols) const;

 private:
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, std::int64_t> merge_ranks_;
  SpecialTokens specials_;
};

/// GPT-2 style pre-tokenization: contractions, optional-space-prefixed runs of
/// letters / digits / other symbols, and whitespace runs.
std::vector<std::string_view> pretokenize(std::string_view text);

/// Maps each byte to its printable byte-level symbol (UTF-8 encoded).
std::vector<std::string> byte_symbols(std::string_view word);

/// Content token strings (no specials) for `text`.
std::vector<std::string> bpe_tokens(std::string_view text,
                                    const BpeVocab &vocab);

TokenizedSample encode(std::string_view text, const BpeVocab &vocab,
                       std::size_t max_length = 512);

std::vector<TokenizedSample> encode_batch(std::span<const std::string> texts,
                                          const BpeVocab &vocab,
                                          std::size_t max_length = 512);

// ---- fallback tokenizer ---------------------------------------------------

/// Desk-scale tokenizer: lexes identifiers, numbers and C operators, then
/// maps each lexeme through an optional dictionary or a stable hash into
/// [kFirstFreeId, vocab_size). Ids 0..4 are the specials.
struct FallbackVocab {
  static constexpr TokenId kFirstFreeId = 5;
  std::size_t vocab_size = 4096;
  std::unordered_map<std::string, TokenId> dictionary;

  TokenId id_of(std::string_view lexeme) const;
};

std::vector<std::string_view> fallback_lex(std::string_view text);

TokenizedSample fallback_encode(std::string_view text, std::size_t max_length,
                                const FallbackVocab &vocab = {});

// ---- configured tokenizer -------------------------------------------------

/// The tokenizer a model was built with, as persisted in checkpoints.
class Tokenizer {
 public:
  static Tokenizer fallback(FallbackVocab vocab, std::size_t max_length);
  static Tokenizer bpe(BpeVocab vocab, std::size_t max_length,
                       std::filesystem::path vocab_path = {},
                       std::filesystem::path merges_path = {});
  /// Builds from {"kind": "fallback"|"bpe", ...}; relative BPE file paths
  /// resolve against `base_dir`.
  static Tokenizer from_json(const nlohmann::ordered_json &config,
                             const std::filesystem::path &base_dir = {});

  nlohmann::ordered_json to_json() const;
  TokenizedSample encode(std::string_view text) const;
  std::vector<TokenizedSample> encode_batch(
      std::span<const std::string> texts) const;

  std::size_t vocab_size() const;
  std::size_t max_length() const noexcept { return max_length_; }
  SpecialTokens specials() const;
  bool is_bpe() const noexcept {
    return std::holds_alternative<BpeVocab>(vocab_);
  }
  const std::filesystem::path &bpe_vocab_path() const { return vocab_path_; }
  const std::filesystem::path &bpe_merges_path() const { return merges_path_; }

 private:
  std::variant<FallbackVocab, BpeVocab> vocab_;
  std::size_t max_length_ = 512;
  std::filesystem::path vocab_path_;
  std::filesystem::path merges_path_;
};

}  // namespace nullscan
