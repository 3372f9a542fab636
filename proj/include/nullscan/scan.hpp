#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nullscan/model.hpp"

namespace nullscan {

inline constexpr const char *kToolName = "nullscan";
inline constexpr const char *kToolVersion = "0.1.0";

/// One function definition found by split_functions. `begin`/`end` are byte
/// offsets into the scanned text, end exclusive (one past the closing brace).
struct FunctionSpan {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t line = 1;  // 1-based line of `begin`

  friend bool operator==(const FunctionSpan &, const FunctionSpan &) = default;
};

/// Copy of `source` with comments, string/char literals and preprocessor
/// lines blanked to spaces. Offsets and newlines are preserved.
std::string mask_source(std::string_view source);

/// Brace-matching function splitter. Not a parser: a top-level `{` whose
/// header contains a parameter list opens a function; namespace, extern
/// "C", class and struct bodies are descended into; anything else
/// (initialisers, enums) is skipped.
std::vector<FunctionSpan> split_functions(std::string_view source);

/// Source files under `inputs` (files as given, directories recursively,
/// C/C++ extensions only), directory contents sorted by path.
std::vector<std::filesystem::path> collect_sources(
    const std::vector<std::filesystem::path> &inputs);

struct ScanOptions {
  /// Entries with a vulnerable verdict and confidence >= threshold are
  /// flagged `reported`; the verdict itself is unaffected.
  double threshold = 0.5;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

struct ScanEntry {
  std::string file;
  FunctionSpan function;
  VulnPrediction prediction;
  bool reported = false;
};

struct ScanReport {
  std::vector<ScanEntry> entries;
  std::size_t files = 0;
  double threshold = 0.5;
  std::string model_kind;
  nlohmann::ordered_json checkpoint;  // identifiers, filled by the caller
  std::string timestamp;              // UTC ISO-8601, empty = omitted

  std::size_t reported_count() const;
  std::size_t vulnerable_count() const;
  /// 0 = nothing reported, 1 = findings present.
  int exit_code() const { return reported_count() > 0 ? 1 : 0; }
  nlohmann::ordered_json to_json() const;
};

/// Splits every file into functions and classifies them. Files are processed
/// by worker threads; entries come back in file order, then source order.
ScanReport scan_files(const Classifier &model,
                      const std::vector<std::filesystem::path> &files,
                      const ScanOptions &options = {});

std::string utc_timestamp();

}  // namespace nullscan
