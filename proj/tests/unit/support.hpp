#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "nullscan/encoder.hpp"
#include "nullscan/tokenizer.hpp"

namespace test_support {

/// Fresh, empty directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string &tag) {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nullscan-" + tag + "-" + std::to_string(rd()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::filesystem::path source_dir() { return NULLSCAN_SOURCE_DIR; }

/// Small encoder used by the gradient and masking tests.
inline nullscan::EncoderConfig small_encoder(std::size_t vocab = 40,
                                             std::size_t positions = 8) {
  nullscan::EncoderConfig c;
  c.vocab_size = vocab;
  c.hidden_dim = 8;
  c.num_layers = 2;
  c.num_heads = 2;
  c.ffn_dim = 12;
  c.max_positions = positions;
  c.dropout_p = 0.1;
  return c;
}

/// Sample with `n` content tokens drawn from [5, vocab), framed to `len`.
inline nullscan::TokenizedSample random_sample(std::mt19937_64 &rng, std::size_t n,
                                               std::size_t len, std::size_t vocab) {
  std::uniform_int_distribution<int> id(5, static_cast<int>(vocab) - 1);
  std::vector<nullscan::TokenId> content(n);
  for (auto &t : content) t = id(rng);
  return nullscan::frame_tokens(content, {}, len);
}

}  // namespace test_support
