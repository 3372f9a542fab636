#include "nullscan/dataset.hpp"

#include <hdf5.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "nullscan/errors.hpp"
#include "nullscan/rng.hpp"

namespace nullscan {

using json = nlohmann::ordered_json;

DatasetFormat parse_dataset_format(std::string_view name) {
  if (name == "csv") return DatasetFormat::csv;
  if (name == "hdf5-vdisc" || name == "hdf5") return DatasetFormat::hdf5_vdisc;
  throw InputError("unknown dataset format '" + std::string(name) +
                   "' (expected csv or hdf5-vdisc)");
}

std::string_view to_string(DatasetFormat format) {
  return format == DatasetFormat::csv ? "csv" : "hdf5-vdisc";
}

DatasetFormat infer_dataset_format(const std::filesystem::path &path) {
  const std::string ext = path.extension().string();
  if (ext == ".h5" || ext == ".hdf5") return DatasetFormat::hdf5_vdisc;
  return DatasetFormat::csv;
}

// ---- LabeledDataset -------------------------------------------------------

LabeledDataset::LabeledDataset(std::vector<CodeSample> samples,
                               Provenance provenance,
                               std::size_t skipped_empty)
    : samples_(std::move(samples)),
      provenance_(std::move(provenance)),
      skipped_empty_(skipped_empty) {
  std::set<std::string_view> ids;
  for (const CodeSample &s : samples_) {
    if (s.label != 0 && s.label != 1)
      throw DatasetError("sample '" + s.id + "' has label " +
                         std::to_string(s.label) + " outside {0,1}");
    if (!ids.insert(s.id).second)
      throw DatasetError("duplicate sample id '" + s.id + "'");
  }
}

std::size_t LabeledDataset::count(int label) const {
  return static_cast<std::size_t>(
      std::count_if(samples_.begin(), samples_.end(),
                    [label](const CodeSample &s) { return s.label == label; }));
}

std::array<std::size_t, 2> LabeledDataset::class_counts() const {
  return {count(0), count(1)};
}

std::vector<int> LabeledDataset::labels() const {
  std::vector<int> out;
  out.reserve(samples_.size());
  for (const CodeSample &s : samples_) out.push_back(s.label);
  return out;
}

std::vector<std::string> LabeledDataset::sources() const {
  std::vector<std::string> out;
  out.reserve(samples_.size());
  for (const CodeSample &s : samples_) out.push_back(s.source);
  return out;
}

LabeledDataset LabeledDataset::subset(
    std::span<const std::size_t> indices) const {
  std::vector<CodeSample> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(samples_.at(i));
  LabeledDataset out;
  out.samples_ = std::move(picked);
  out.provenance_ = provenance_;
  return out;
}

// ---- labels ---------------------------------------------------------------

std::vector<int> cast_labels(const std::vector<bool> &raw) {
  std::vector<int> out;
  out.reserve(raw.size());
  for (bool b : raw) out.push_back(b ? 1 : 0);
  return out;
}

bool parse_bool_label(std::string_view text) {
  std::string lower;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c)))
      lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "true" || lower == "1") return true;
  if (lower == "false" || lower == "0") return false;
  throw DatasetError("label '" + std::string(text) +
                     "' is not one of true/false/1/0");
}

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
  });
}

std::string read_text(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---- CSV ------------------------------------------------------------------

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    if (!(row.size() == 1 && row[0].empty() && !field_started))
      rows.push_back(std::move(row));
    row.clear();
    field_started = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty())
          throw DatasetError("stray quote inside unquoted CSV field on line " +
                             std::to_string(line));
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        [[fallthrough]];
      case '\n':
        ++line;
        end_row();
        break;
      default:
        field += c;
        field_started = true;
    }
  }
  if (in_quotes) throw DatasetError("unterminated quoted CSV field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

namespace {

LabeledDataset load_csv(const std::filesystem::path &path,
                        const std::string &cwe) {
  const auto rows = parse_csv(read_text(path));
  if (rows.empty()) throw EmptyDataset("CSV file " + path.string() + " is empty");
  const auto &header = rows.front();
  auto column = [&](std::string_view name) -> std::ptrdiff_t {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const std::ptrdiff_t id_col = column("id");
  const std::ptrdiff_t source_col = column("source");
  std::ptrdiff_t label_col = cwe.empty() ? -1 : column(cwe);
  if (label_col < 0) label_col = column("label");
  if (source_col < 0)
    throw DatasetError(path.string() + ": CSV header has no 'source' column");
  if (label_col < 0)
    throw DatasetError(path.string() + ": CSV header has neither a '" + cwe +
                       "' nor a 'label' column");

  std::vector<CodeSample> samples;
  std::size_t skipped = 0;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto &row = rows[r];
    if (row.size() != header.size())
      throw DatasetError(path.string() + ": record " + std::to_string(r) +
                         " has " + std::to_string(row.size()) +
                         " fields, header has " +
                         std::to_string(header.size()));
    if (is_blank(row[source_col])) {
      ++skipped;
      continue;
    }
    CodeSample s;
    s.id = id_col >= 0 && !row[id_col].empty() ? row[id_col]
                                                : std::to_string(r - 1);
    s.source = row[source_col];
    try {
      s.label = parse_bool_label(row[label_col]) ? 1 : 0;
    } catch (const DatasetError &e) {
      throw DatasetError(path.string() + ": record " + std::to_string(r) +
                         ": " + e.what());
    }
    samples.push_back(std::move(s));
  }
  if (samples.empty())
    throw EmptyDataset(path.string() + ": no usable records (" +
                       std::to_string(skipped) + " blank sources skipped)");
  return LabeledDataset(std::move(samples),
                        Provenance{path.string(), cwe, "csv"}, skipped);
}

// ---- HDF5 -----------------------------------------------------------------

class H5Id {
 public:
  H5Id(hid_t id, herr_t (*closer)(hid_t)) : id_(id), closer_(closer) {}
  H5Id(const H5Id &) = delete;
  H5Id &operator=(const H5Id &) = delete;
  ~H5Id() {
    if (id_ >= 0) closer_(id_);
  }
  hid_t get() const noexcept { return id_; }
  bool valid() const noexcept { return id_ >= 0; }

 private:
  hid_t id_;
  herr_t (*closer_)(hid_t);
};

bool h5_has_dataset(hid_t file, const std::string &name) {
  return H5Lexists(file, name.c_str(), H5P_DEFAULT) > 0;
}

std::vector<std::string> h5_read_strings(hid_t file, const std::string &name) {
  H5Id ds(H5Dopen2(file, name.c_str(), H5P_DEFAULT), H5Dclose);
  if (!ds.valid()) throw DatasetError("cannot open HDF5 dataset " + name);
  H5Id space(H5Dget_space(ds.get()), H5Sclose);
  H5Id ftype(H5Dget_type(ds.get()), H5Tclose);
  if (H5Tget_class(ftype.get()) != H5T_STRING)
    throw DatasetError("HDF5 dataset " + name + " is not a string dataset");
  const auto n = static_cast<std::size_t>(H5Sget_simple_extent_npoints(space.get()));
  std::vector<std::string> out;
  out.reserve(n);
  if (n == 0) return out;

  if (H5Tis_variable_str(ftype.get()) > 0) {
    H5Id mtype(H5Tcopy(H5T_C_S1), H5Tclose);
    H5Tset_size(mtype.get(), H5T_VARIABLE);
    H5Tset_cset(mtype.get(), H5Tget_cset(ftype.get()));
    std::vector<char *> buf(n, nullptr);
    if (H5Dread(ds.get(), mtype.get(), H5S_ALL, H5S_ALL, H5P_DEFAULT,
                buf.data()) < 0)
      throw DatasetError("failed to read HDF5 dataset " + name);
    for (char *s : buf) out.emplace_back(s ? s : "");
    H5Dvlen_reclaim(mtype.get(), space.get(), H5P_DEFAULT, buf.data());
  } else {
    const std::size_t width = H5Tget_size(ftype.get());
    H5Id mtype(H5Tcopy(H5T_C_S1), H5Tclose);
    H5Tset_size(mtype.get(), width);
    H5Tset_strpad(mtype.get(), H5T_STR_NULLPAD);
    std::vector<char> buf(n * width);
    if (H5Dread(ds.get(), mtype.get(), H5S_ALL, H5S_ALL, H5P_DEFAULT,
                buf.data()) < 0)
      throw DatasetError("failed to read HDF5 dataset " + name);
    for (std::size_t i = 0; i < n; ++i) {
      const char *p = buf.data() + i * width;
      out.emplace_back(p, strnlen(p, width));
    }
  }
  return out;
}

std::vector<bool> h5_read_bools(hid_t file, const std::string &name) {
  H5Id ds(H5Dopen2(file, name.c_str(), H5P_DEFAULT), H5Dclose);
  if (!ds.valid()) throw DatasetError("cannot open HDF5 dataset " + name);
  H5Id space(H5Dget_space(ds.get()), H5Sclose);
  H5Id ftype(H5Dget_type(ds.get()), H5Tclose);
  const auto n = static_cast<std::size_t>(H5Sget_simple_extent_npoints(space.get()));
  const H5T_class_t cls = H5Tget_class(ftype.get());
  std::vector<bool> out(n);
  if (n == 0) return out;
  if (cls == H5T_ENUM || cls == H5T_BITFIELD) {
    // numpy bools arrive as an enum over int8; read raw native bytes.
    H5Id mtype(H5Tget_native_type(ftype.get(), H5T_DIR_ASCEND), H5Tclose);
    const std::size_t width = H5Tget_size(mtype.get());
    std::vector<unsigned char> buf(n * width);
    if (H5Dread(ds.get(), mtype.get(), H5S_ALL, H5S_ALL, H5P_DEFAULT,
                buf.data()) < 0)
      throw DatasetError("failed to read HDF5 dataset " + name);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = std::any_of(buf.begin() + i * width,
                           buf.begin() + (i + 1) * width,
                           [](unsigned char b) { return b != 0; });
  } else if (cls == H5T_INTEGER) {
    std::vector<long long> buf(n);
    if (H5Dread(ds.get(), H5T_NATIVE_LLONG, H5S_ALL, H5S_ALL, H5P_DEFAULT,
                buf.data()) < 0)
      throw DatasetError("failed to read HDF5 dataset " + name);
    for (std::size_t i = 0; i < n; ++i) out[i] = buf[i] != 0;
  } else {
    throw DatasetError("HDF5 dataset " + name + " is not boolean-typed");
  }
  return out;
}

LabeledDataset load_hdf5(const std::filesystem::path &path,
                         const std::string &cwe) {
  if (!std::filesystem::exists(path))
    throw DatasetError("dataset file " + path.string() + " does not exist");
  H5E_auto2_t old_func = nullptr;
  void *old_data = nullptr;
  H5Eget_auto2(H5E_DEFAULT, &old_func, &old_data);
  H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
  struct RestoreErrors {
    H5E_auto2_t func;
    void *data;
    ~RestoreErrors() { H5Eset_auto2(H5E_DEFAULT, func, data); }
  } restore{old_func, old_data};

  H5Id file(H5Fopen(path.string().c_str(), H5F_ACC_RDONLY, H5P_DEFAULT),
            H5Fclose);
  if (!file.valid())
    throw DatasetError(path.string() + " is not a readable HDF5 file");
  std::string source_name;
  for (const char *candidate : {"functionSource", "source"})
    if (h5_has_dataset(file.get(), candidate)) source_name = candidate;
  if (source_name.empty())
    throw DatasetError(path.string() +
                       ": no 'functionSource' or 'source' dataset");
  if (cwe.empty() || !h5_has_dataset(file.get(), cwe))
    throw DatasetError(path.string() + ": no CWE dataset named '" + cwe + "'");

  const auto sources = h5_read_strings(file.get(), source_name);
  const auto labels = cast_labels(h5_read_bools(file.get(), cwe));
  if (sources.size() != labels.size())
    throw DatasetError(path.string() + ": '" + source_name + "' has " +
                       std::to_string(sources.size()) + " records but '" + cwe +
                       "' has " + std::to_string(labels.size()));
  const std::string stem = path.stem().string();
  std::vector<CodeSample> samples;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (is_blank(sources[i])) {
      ++skipped;
      continue;
    }
    samples.push_back({stem + ":" + std::to_string(i), sources[i], labels[i]});
  }
  if (samples.empty())
    throw EmptyDataset(path.string() + ": no usable records (" +
                       std::to_string(skipped) + " blank sources skipped)");
  return LabeledDataset(std::move(samples),
                        Provenance{path.string(), cwe, "hdf5-vdisc"}, skipped);
}

}  // namespace

LabeledDataset load_dataset(const std::filesystem::path &path,
                            const std::string &cwe, DatasetFormat format) {
  if (!std::filesystem::exists(path))
    throw DatasetError("dataset file " + path.string() + " does not exist");
  return format == DatasetFormat::csv ? load_csv(path, cwe)
                                      : load_hdf5(path, cwe);
}

// ---- balance / folds ------------------------------------------------------

LabeledDataset balance(const LabeledDataset &ds, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < ds.size(); ++i)
    by_class[ds[i].label].push_back(i);
  if (by_class[0].empty() || by_class[1].empty())
    throw DegenerateClassBalance(
        "cannot balance: class " + std::string(by_class[0].empty() ? "0" : "1") +
        " has no samples");
  const std::size_t target = std::min(by_class[0].size(), by_class[1].size());
  std::vector<std::size_t> kept;
  for (auto &members : by_class) {
    if (members.size() > target) {
      RngState rng(seed);
      std::shuffle(members.begin(), members.end(), rng.engine());
      members.resize(target);
    }
    kept.insert(kept.end(), members.begin(), members.end());
  }
  std::sort(kept.begin(), kept.end());
  std::vector<CodeSample> samples;
  samples.reserve(kept.size());
  for (std::size_t i : kept) samples.push_back(ds[i]);
  return LabeledDataset(std::move(samples), ds.provenance(), ds.skipped_empty());
}

std::vector<std::size_t> FoldPlan::validation_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::training_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] != fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::fold_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (std::size_t a : assignments) ++sizes[a];
  return sizes;
}

FoldPlan make_folds(const LabeledDataset &ds, std::size_t k,
                    std::uint64_t seed) {
  if (k < 2 || k > ds.size())
    throw InputError("fold count " + std::to_string(k) +
                     " out of range [2, " + std::to_string(ds.size()) + "]");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngState rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  FoldPlan plan{k, std::vector<std::size_t>(ds.size())};
  for (std::size_t j = 0; j < order.size(); ++j) plan.assignments[order[j]] = j % k;
  return plan;
}

std::pair<LabeledDataset, LabeledDataset> split_holdout(
    const LabeledDataset &ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw InputError("test fraction must be in [0, 1)");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngState rng(seed);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_test =
      static_cast<std::size_t>(test_fraction * static_cast<double>(ds.size()));
  std::vector<std::size_t> test(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {ds.subset(train), ds.subset(test)};
}

// ---- persistence ----------------------------------------------------------

namespace {

std::string csv_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void write_csv(const LabeledDataset &ds, std::ostream &out) {
  out << "id,source,label\n";
  for (const CodeSample &s : ds.samples())
    out << csv_quote(s.id) << ',' << csv_quote(s.source) << ','
        << (s.label ? "true" : "false") << '\n';
}

void write_csv(const LabeledDataset &ds, const std::filesystem::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_csv(ds, out);
}

json dataset_manifest(const LabeledDataset &ds, std::uint64_t seed) {
  const auto counts = ds.class_counts();
  json j;
  j["schema_version"] = 1;
  j["provenance"] = {{"path", ds.provenance().path},
                     {"cwe", ds.provenance().cwe},
                     {"format", ds.provenance().format}};
  j["seed"] = seed;
  j["counts"] = {{"true", counts[1]}, {"false", counts[0]}, {"total", ds.size()}};
  j["skipped_empty"] = ds.skipped_empty();
  return j;
}

// ---- synthetic corpus -----------------------------------------------------

LabeledDataset synthetic_corpus(const SyntheticCorpusOptions &options) {
  static constexpr std::array<std::string_view, 8> kNames = {
      "parse_header", "update_node", "copy_entry", "read_packet",
      "init_table",   "free_list",   "scan_block", "load_config"};
  static constexpr std::array<std::string_view, 4> kTypes = {
      "struct node", "char", "struct packet", "int"};
  static constexpr std::array<std::string_view, 4> kArgs = {"ctx", "buf", "src",
                                                            "item"};
  static constexpr std::array<std::string_view, 4> kFields = {"len", "next",
                                                              "data", "flags"};
  static constexpr std::array<std::string_view, 4> kTemps = {"tmp", "out",
                                                             "blk", "cur"};
  RngState rng(options.seed);
  auto pick = [&](const auto &pool) { return pool[rng.below(pool.size())]; };

  auto filler = [&](std::string_view arg) {
    std::ostringstream s;
    switch (rng.below(6)) {
      case 0:
        s << "int v" << rng.below(9) << " = n + " << rng.below(100) << ";";
        break;
      case 1:
        s << "if (" << arg << " == NULL) return -1;";
        break;
      case 2:
        s << "total += " << arg << "->" << pick(kFields) << ";";
        break;
      case 3:
        s << "for (i = 0; i < n; i++) sum += i;";
        break;
      case 4:
        s << pick(kTemps) << " = make_buffer(n); if (!" << pick(kTemps)
          << ") return 0;";
        break;
      default:
        s << "memset(" << arg << ", 0, n);";
    }
    return s.str();
  };

  std::vector<CodeSample> samples;
  samples.reserve(options.samples);
  for (std::size_t i = 0; i < options.samples; ++i) {
    const bool positive = rng.uniform() < options.positive_fraction;
    const std::string_view arg = pick(kArgs);
    std::vector<std::string> body;
    const std::size_t fillers = 1 + rng.below(2);
    for (std::size_t f = 0; f < fillers; ++f) body.push_back(filler(arg));
    if (positive) {
      const std::string_view tmp = pick(kTemps);
      std::ostringstream s;
      s << tmp << " = " << kSentinelCall << "(n); " << tmp << "->"
        << pick(kFields) << " = 0;";
      body.insert(body.begin() + static_cast<std::ptrdiff_t>(
                                     rng.below(body.size() + 1)),
                  s.str());
    }
    std::ostringstream fn;
    fn << "int " << pick(kNames) << "(" << pick(kTypes) << " *" << arg
       << ", int n) {\n";
    for (const std::string &stmt : body) fn << "  " << stmt << "\n";
    fn << "}\n";
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06zu", i);
    samples.push_back({id, fn.str(), positive ? 1 : 0});
  }
  return LabeledDataset(std::move(samples),
                        Provenance{"synthetic", "sentinel", "synthetic"});
}

}  // namespace nullscan
