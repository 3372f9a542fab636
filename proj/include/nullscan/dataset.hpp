#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace nullscan {

/// One function's source text with its CWE label (1 = vulnerable).
struct CodeSample {
  std::string id;
  std::string source;
  int label = 0;

  friend bool operator==(const CodeSample &, const CodeSample &) = default;
};

enum class DatasetFormat { hdf5_vdisc, csv };

DatasetFormat parse_dataset_format(std::string_view name);
std::string_view to_string(DatasetFormat format);
/// csv for *.csv, hdf5_vdisc for *.h5/*.hdf5.
DatasetFormat infer_dataset_format(const std::filesystem::path &path);

struct Provenance {
  std::string path;
  std::string cwe;
  std::string format;

  friend bool operator==(const Provenance &, const Provenance &) = default;
};

class LabeledDataset {
 public:
  LabeledDataset() = default;
  /// Validates labels and id uniqueness.
  LabeledDataset(std::vector<CodeSample> samples, Provenance provenance = {},
                 std::size_t skipped_empty = 0);

  const std::vector<CodeSample> &samples() const noexcept { return samples_; }
  const Provenance &provenance() const noexcept { return provenance_; }
  /// Records dropped at load time because their source was blank.
  std::size_t skipped_empty() const noexcept { return skipped_empty_; }

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const CodeSample &operator[](std::size_t i) const { return samples_[i]; }

  std::size_t count(int label) const;
  /// {negatives, positives}
  std::array<std::size_t, 2> class_counts() const;

  std::vector<int> labels() const;
  std::vector<std::string> sources() const;

  /// Samples at `indices`, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const LabeledDataset &,
                         const LabeledDataset &) = default;

 private:
  std::vector<CodeSample> samples_;
  Provenance provenance_;
  std::size_t skipped_empty_ = 0;
};

/// Reads a VDISC-style corpus. For CSV the label column is `cwe` when the
/// header has it and `label` otherwise.
LabeledDataset load_dataset(const std::filesystem::path &path,
                            const std::string &cwe, DatasetFormat format);

std::vector<int> cast_labels(const std::vector<bool> &raw);

/// Parses "true"/"false"/"1"/"0" (case-insensitive).
bool parse_bool_label(std::string_view text);

/// Uniformly undersamples the majority class (seeded, without replacement)
/// down to the minority count. Retained samples keep their input order.
LabeledDataset balance(const LabeledDataset &ds, std::uint64_t seed);

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;

  std::vector<std::size_t> validation_indices(std::size_t fold) const;
  std::vector<std::size_t> training_indices(std::size_t fold) const;
  std::vector<std::size_t> fold_sizes() const;
};

/// Seeded shuffle followed by round-robin fold assignment (not stratified).
FoldPlan make_folds(const LabeledDataset &ds, std::size_t k,
                    std::uint64_t seed);

/// Seeded train/test split; `test_fraction` of samples go to test.
std::pair<LabeledDataset, LabeledDataset> split_holdout(
    const LabeledDataset &ds, double test_fraction, std::uint64_t seed);

// ---- persistence ----------------------------------------------------------

void write_csv(const LabeledDataset &ds, const std::filesystem::path &path);
void write_csv(const LabeledDataset &ds, std::ostream &out);

/// RFC 4180 reader: returns the rows including the header row.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

nlohmann::ordered_json dataset_manifest(const LabeledDataset &ds,
                                        std::uint64_t seed);

// ---- synthetic corpus -----------------------------------------------------

struct SyntheticCorpusOptions {
  std::size_t samples = 2000;
  std::uint64_t seed = 7;
  /// Fraction of samples carrying the sentinel pattern.
  double positive_fraction = 0.5;
};

/// Short C functions; label 1 iff the function contains the sentinel
/// unchecked-allocation pattern (`alloc_buffer(...)` result dereferenced).
LabeledDataset synthetic_corpus(const SyntheticCorpusOptions &options);

inline constexpr std::string_view kSentinelCall = "alloc_buffer";

}  // namespace nullscan
