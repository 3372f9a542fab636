#include "nullscan/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "nullscan/errors.hpp"

namespace nullscan {

using json = nlohmann::ordered_json;

TokenizedSample frame_tokens(std::span<const TokenId> content,
                             const SpecialTokens &specials,
                             std::size_t max_length) {
  if (max_length < 2)
    throw InputError("max_length must be >= 2, got " +
                     std::to_string(max_length));
  const std::size_t kept = std::min(content.size(), max_length - 2);
  TokenizedSample sample;
  sample.token_ids.assign(max_length, specials.pad);
  sample.attention_mask.assign(max_length, 0);
  sample.token_ids[0] = specials.bos;
  std::copy_n(content.begin(), kept, sample.token_ids.begin() + 1);
  sample.token_ids[kept + 1] = specials.eos;
  sample.true_length = kept + 2;
  std::fill_n(sample.attention_mask.begin(), sample.true_length, 1);
  return sample;
}

// ---- byte-level symbols ---------------------------------------------------

namespace {

std::string utf8(std::uint32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

// GPT-2 byte -> printable code point table.
const std::array<std::string, 256> &byte_table() {
  static const std::array<std::string, 256> table = [] {
    std::array<std::string, 256> t;
    auto printable = [](int b) {
      return (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) ||
             (b >= 0xAE && b <= 0xFF);
    };
    std::uint32_t next = 256;
    for (int b = 0; b < 256; ++b)
      t[b] = utf8(printable(b) ? static_cast<std::uint32_t>(b) : next++);
    return t;
  }();
  return table;
}

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_letter(unsigned char c) { return std::isalpha(c) != 0 || c >= 0x80; }
bool is_digit(unsigned char c) { return std::isdigit(c) != 0; }
bool is_other(unsigned char c) {
  return !is_space(c) && !is_letter(c) && !is_digit(c);
}

template <typename Pred>
std::size_t run_end(std::string_view s, std::size_t i, Pred pred) {
  while (i < s.size() && pred(static_cast<unsigned char>(s[i]))) ++i;
  return i;
}

std::size_t contraction_length(std::string_view s, std::size_t i) {
  if (s[i] != '\'') return 0;
  for (std::string_view suffix : {"re", "ve", "ll", "s", "t", "m", "d"})
    if (s.substr(i + 1, suffix.size()) == suffix) return 1 + suffix.size();
  return 0;
}

}  // namespace

std::vector<std::string> byte_symbols(std::string_view word) {
  const auto &table = byte_table();
  std::vector<std::string> out;
  out.reserve(word.size());
  for (unsigned char c : word) out.push_back(table[c]);
  return out;
}

std::vector<std::string_view> pretokenize(std::string_view s) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t end = i;
    if (std::size_t len = contraction_length(s, i)) {
      end = i + len;
    } else if (c == ' ' && i + 1 < n &&
               !is_space(static_cast<unsigned char>(s[i + 1]))) {
      const auto next = static_cast<unsigned char>(s[i + 1]);
      if (is_letter(next))
        end = run_end(s, i + 1, is_letter);
      else if (is_digit(next))
        end = run_end(s, i + 1, is_digit);
      else
        end = run_end(s, i + 1, is_other);
    } else if (is_letter(c)) {
      end = run_end(s, i, is_letter);
    } else if (is_digit(c)) {
      end = run_end(s, i, is_digit);
    } else if (!is_space(c)) {
      end = run_end(s, i, is_other);
    } else {
      end = run_end(s, i, is_space);
      // A whitespace run followed by text leaves its last character to
      // prefix the next word.
      if (end < n && end - i > 1) --end;
    }
    words.push_back(s.substr(i, end - i));
    i = end;
  }
  return words;
}

// ---- BpeVocab -------------------------------------------------------------

namespace {

std::string pair_key(const std::string &a, const std::string &b) {
  std::string key;
  key.reserve(a.size() + b.size() + 1);
  key += a;
  key += '\x1f';
  key += b;
  return key;
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VocabError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

BpeVocab BpeVocab::from_parts(
    std::unordered_map<std::string, TokenId> token_to_id,
    std::vector<std::pair<std::string, std::string>> merges) {
  BpeVocab v;
  const std::size_t n = token_to_id.size();
  std::vector<bool> seen(n, false);
  for (const auto &[token, id] : token_to_id) {
    if (id < 0 || static_cast<std::size_t>(id) >= n)
      throw VocabError("token '" + token + "' has id " + std::to_string(id) +
                       " outside [0, " + std::to_string(n) + ")");
    if (seen[id])
      throw VocabError("duplicate token id " + std::to_string(id));
    seen[id] = true;
  }
  auto special = [&](std::string_view name) {
    auto it = token_to_id.find(std::string(name));
    if (it == token_to_id.end())
      throw VocabError("vocabulary is missing special token " +
                       std::string(name));
    return it->second;
  };
  v.specials_ = SpecialTokens{special(kBos), special(kPad), special(kEos),
                              special(kUnk), special(kMask)};
  v.token_to_id_ = std::move(token_to_id);
  for (std::size_t r = 0; r < merges.size(); ++r) {
    const auto &[a, b] = merges[r];
    if (!v.token_to_id_.contains(a + b))
      throw VocabError("merge '" + a + " " + b + "' (line " +
                       std::to_string(r + 1) +
                       ") produces a token missing from the vocabulary");
    v.merge_ranks_.emplace(pair_key(a, b), static_cast<std::int64_t>(r));
  }
  v.merges_ = std::move(merges);
  return v;
}

BpeVocab BpeVocab::parse(std::string_view vocab_json,
                         std::string_view merges_text) {
  std::unordered_map<std::string, TokenId> token_to_id;
  std::set<std::string> keys;
  std::string duplicate;
  json parsed;
  try {
    parsed = json::parse(
        vocab_json,
        [&](int depth, json::parse_event_t event, json &parsed_value) {
          if (depth == 1 && event == json::parse_event_t::key) {
            const std::string key = parsed_value.get<std::string>();
            if (!keys.insert(key).second && duplicate.empty()) duplicate = key;
          }
          return true;
        });
  } catch (const json::exception &e) {
    throw VocabError(std::string("malformed vocabulary JSON: ") + e.what());
  }
  if (!duplicate.empty())
    throw VocabError("duplicate token '" + duplicate + "' in vocabulary");
  if (!parsed.is_object())
    throw VocabError("vocabulary JSON must be an object of token -> id");
  for (const auto &[token, id] : parsed.items()) {
    if (!id.is_number_integer())
      throw VocabError("token '" + token + "' has a non-integer id");
    token_to_id.emplace(token, id.get<TokenId>());
  }

  std::vector<std::pair<std::string, std::string>> merges;
  std::istringstream lines{std::string(merges_text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.starts_with("#version")) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos || space == 0 ||
        space + 1 >= line.size() ||
        line.find(' ', space + 1) != std::string::npos)
      throw VocabError("malformed merges line " + std::to_string(line_no) +
                       ": '" + line + "'");
    merges.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  return from_parts(std::move(token_to_id), std::move(merges));
}

BpeVocab BpeVocab::load(const std::filesystem::path &vocab_path,
                        const std::filesystem::path &merges_path) {
  return parse(read_file(vocab_path), read_file(merges_path));
}

TokenId BpeVocab::id_of(const std::string &token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? specials_.unk : it->second;
}

std::int64_t BpeVocab::merge_rank(const std::string &left,
                                  const std::string &right) const {
  auto it = merge_ranks_.find(pair_key(left, right));
  return it == merge_ranks_.end() ? -1 : it->second;
}

std::vector<std::string> BpeVocab::apply_merges(
    std::vector<std::string> symbols) const {
  while (symbols.size() > 1) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const std::int64_t rank = merge_rank(symbols[i], symbols[i + 1]);
      if (rank >= 0 && rank < best) {
        best = rank;
        best_at = i;
      }
    }
    if (best == std::numeric_limits<std::int64_t>::max()) break;
    const std::string left = symbols[best_at];
    const std::string right = symbols[best_at + 1];
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == left &&
          symbols[i + 1] == right) {
        merged.push_back(left + right);
        i += 2;
      } else {
        merged.push_back(std::move(symbols[i]));
        ++i;
      }
    }
    symbols = std::move(merged);
  }
  return symbols;
}

std::vector<std::string> bpe_tokens(std::string_view text,
                                    const BpeVocab &vocab) {
  std::vector<std::string> out;
  for (std::string_view word : pretokenize(text))
    for (std::string &tok : vocab.apply_merges(byte_symbols(word)))
      out.push_back(std::move(tok));
  return out;
}

TokenizedSample encode(std::string_view text, const BpeVocab &vocab,
                       std::size_t max_length) {
  if (max_length < 2)
    throw InputError("max_length must be >= 2, got " +
                     std::to_string(max_length));
  const std::size_t budget = max_length - 2;
  std::vector<TokenId> ids;
  for (std::string_view word : pretokenize(text)) {
    if (ids.size() >= budget) break;
    for (const std::string &tok : vocab.apply_merges(byte_symbols(word))) {
      if (ids.size() >= budget) break;
      ids.push_back(vocab.id_of(tok));
    }
  }
  return frame_tokens(ids, vocab.specials(), max_length);
}

std::vector<TokenizedSample> encode_batch(std::span<const std::string> texts,
                                          const BpeVocab &vocab,
                                          std::size_t max_length) {
  std::vector<TokenizedSample> out;
  out.reserve(texts.size());
  for (const std::string &t : texts) out.push_back(encode(t, vocab, max_length));
  return out;
}

// ---- fallback -------------------------------------------------------------

TokenId FallbackVocab::id_of(std::string_view lexeme) const {
  if (!dictionary.empty()) {
    auto it = dictionary.find(std::string(lexeme));
    if (it != dictionary.end()) return it->second;
  }
  if (vocab_size <= static_cast<std::size_t>(kFirstFreeId))
    return SpecialTokens{}.unk;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : lexeme) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  const std::uint64_t span = vocab_size - kFirstFreeId;
  return static_cast<TokenId>(kFirstFreeId + h % span);
}

std::vector<std::string_view> fallback_lex(std::string_view s) {
  static constexpr std::array<std::string_view, 18> kOperators = {
      "<<=", ">>=", "->", "++", "--", "==", "!=", "<=", ">=",
      "&&",  "||",  "<<", ">>", "+=", "-=", "*=", "/=", "::"};
  auto ident = [](unsigned char c) {
    return std::isalnum(c) != 0 || c == '_' || c >= 0x80;
  };
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (ident(c)) {
      const std::size_t end = run_end(s, i, ident);
      out.push_back(s.substr(i, end - i));
      i = end;
      continue;
    }
    std::size_t len = 1;
    for (std::string_view op : kOperators) {
      if (s.substr(i, op.size()) == op) {
        len = op.size();
        break;
      }
    }
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

TokenizedSample fallback_encode(std::string_view text, std::size_t max_length,
                                const FallbackVocab &vocab) {
  if (max_length < 2)
    throw InputError("max_length must be >= 2, got " +
                     std::to_string(max_length));
  std::vector<TokenId> ids;
  for (std::string_view lexeme : fallback_lex(text)) {
    if (ids.size() + 2 >= max_length) break;
    ids.push_back(vocab.id_of(lexeme));
  }
  return frame_tokens(ids, SpecialTokens{}, max_length);
}

// ---- Tokenizer ------------------------------------------------------------

Tokenizer Tokenizer::fallback(FallbackVocab vocab, std::size_t max_length) {
  if (max_length < 2) throw InputError("max_length must be >= 2");
  Tokenizer t;
  t.vocab_ = std::move(vocab);
  t.max_length_ = max_length;
  return t;
}

Tokenizer Tokenizer::bpe(BpeVocab vocab, std::size_t max_length,
                         std::filesystem::path vocab_path,
                         std::filesystem::path merges_path) {
  if (max_length < 2) throw InputError("max_length must be >= 2");
  Tokenizer t;
  t.vocab_ = std::move(vocab);
  t.max_length_ = max_length;
  t.vocab_path_ = std::move(vocab_path);
  t.merges_path_ = std::move(merges_path);
  return t;
}

Tokenizer Tokenizer::from_json(const json &config,
                               const std::filesystem::path &base_dir) {
  const std::string kind = config.value("kind", "fallback");
  const std::size_t max_length = config.value("max_length", std::size_t{512});
  if (kind == "fallback") {
    FallbackVocab vocab;
    vocab.vocab_size = config.value("vocab_size", std::size_t{4096});
    if (config.contains("dictionary"))
      for (const auto &[k, v] : config.at("dictionary").items())
        vocab.dictionary.emplace(k, v.get<TokenId>());
    return fallback(std::move(vocab), max_length);
  }
  if (kind == "bpe") {
    auto resolve = [&](const std::string &key) {
      std::filesystem::path p = config.at(key).get<std::string>();
      return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    };
    const auto vocab_path = resolve("vocab");
    const auto merges_path = resolve("merges");
    return bpe(BpeVocab::load(vocab_path, merges_path), max_length, vocab_path,
               merges_path);
  }
  throw InputError("unknown tokenizer kind '" + kind + "'");
}

json Tokenizer::to_json() const {
  json j;
  if (const auto *fb = std::get_if<FallbackVocab>(&vocab_)) {
    j["kind"] = "fallback";
    j["max_length"] = max_length_;
    j["vocab_size"] = fb->vocab_size;
    if (!fb->dictionary.empty()) {
      std::vector<std::pair<std::string, TokenId>> sorted(
          fb->dictionary.begin(), fb->dictionary.end());
      std::sort(sorted.begin(), sorted.end());
      json dict = json::object();
      for (const auto &[k, v] : sorted) dict[k] = v;
      j["dictionary"] = std::move(dict);
    }
  } else {
    j["kind"] = "bpe";
    j["max_length"] = max_length_;
    j["vocab"] = vocab_path_.filename().string();
    j["merges"] = merges_path_.filename().string();
  }
  return j;
}

TokenizedSample Tokenizer::encode(std::string_view text) const {
  if (const auto *fb = std::get_if<FallbackVocab>(&vocab_))
    return fallback_encode(text, max_length_, *fb);
  return nullscan::encode(text, std::get<BpeVocab>(vocab_), max_length_);
}

std::vector<TokenizedSample> Tokenizer::encode_batch(
    std::span<const std::string> texts) const {
  std::vector<TokenizedSample> out;
  out.reserve(texts.size());
  for (const std::string &t : texts) out.push_back(encode(t));
  return out;
}

std::size_t Tokenizer::vocab_size() const {
  if (const auto *fb = std::get_if<FallbackVocab>(&vocab_))
    return fb->vocab_size;
  return std::get<BpeVocab>(vocab_).size();
}

SpecialTokens Tokenizer::specials() const {
  if (std::holds_alternative<FallbackVocab>(vocab_)) return SpecialTokens{};
  return std::get<BpeVocab>(vocab_).specials();
}

}  // namespace nullscan
