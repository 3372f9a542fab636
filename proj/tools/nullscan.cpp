// nullscan: ingest, train, evaluate, crossval, scan and inspect commands.
//
// Exit codes: 0 success / clean scan, 1 scan findings, 2 usage or input
// error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nullscan/checkpoint.hpp"
#include "nullscan/dataset.hpp"
#include "nullscan/run_config.hpp"
#include "nullscan/scan.hpp"
#include "nullscan/train_eval.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace nullscan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;

std::string read_text(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_json(const fs::path &path, const json &j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Writes to `out` when given, else stdout.
void emit(const json &j, const std::string &out) {
  if (out.empty())
    std::cout << j.dump(2) << '\n';
  else
    write_json(out, j);
}

LabeledDataset load_any(const fs::path &path, const std::string &cwe,
                        const std::string &format) {
  const DatasetFormat f =
      format.empty() ? infer_dataset_format(path) : parse_dataset_format(format);
  return load_dataset(path, cwe, f);
}

// A data argument is either a dataset file or an ingest output directory;
// `split` picks the file inside a directory.
fs::path resolve_split(const fs::path &data, const char *split) {
  if (!fs::is_directory(data)) return data;
  const fs::path p = data / (std::string(split) + ".csv");
  if (!fs::exists(p))
    throw InputError(data.string() + " has no " + p.filename().string());
  return p;
}

std::string dataset_hash(const fs::path &data, const fs::path &train_file) {
  if (fs::is_directory(data) && fs::exists(data / "manifest.json"))
    return content_hash(read_text(data / "manifest.json"));
  return content_hash(read_text(train_file));
}

// ---- ingest ----------------------------------------------------------------

struct IngestArgs {
  std::string data, test, cwe = "CWE-476", format, out;
  std::uint64_t seed = 42;
  double holdout = 0.2;
  std::size_t synthetic = 0;
  std::string report_format = "json";
};

json split_entry(const LabeledDataset &ds, const std::string &file) {
  const auto counts = ds.class_counts();
  return {{"file", file},
          {"counts", {{"true", counts[1]}, {"false", counts[0]}, {"total", ds.size()}}},
          {"skipped_empty", ds.skipped_empty()}};
}

int cmd_ingest(const IngestArgs &a) {
  if (a.data.empty() == (a.synthetic == 0))
    throw InputError("ingest needs exactly one of --data or --synthetic");
  LabeledDataset train_raw, test;
  std::string source_path, source_format, cwe = a.cwe;
  if (a.synthetic > 0) {
    SyntheticCorpusOptions opt;
    opt.samples = a.synthetic;
    opt.seed = a.seed;
    LabeledDataset all = synthetic_corpus(opt);
    std::tie(train_raw, test) = split_holdout(all, a.holdout, a.seed);
    source_path = "synthetic";
    source_format = "synthetic";
    cwe = "sentinel";
  } else {
    train_raw = load_any(a.data, a.cwe, a.format);
    source_path = a.data;
    source_format = std::string(to_string(
        a.format.empty() ? infer_dataset_format(a.data) : parse_dataset_format(a.format)));
    if (!a.test.empty()) {
      test = load_any(a.test, a.cwe, a.format);
    } else {
      std::tie(train_raw, test) = split_holdout(train_raw, a.holdout, a.seed);
    }
  }
  const LabeledDataset train = balance(train_raw, a.seed);
  if (test.empty()) throw EmptyDataset("test split is empty");

  const fs::path out = a.out;
  fs::create_directories(out);
  write_csv(train, out / "train.csv");
  write_csv(test, out / "test.csv");
  write_json(out / "train.manifest.json", dataset_manifest(train, a.seed));
  write_json(out / "test.manifest.json", dataset_manifest(test, a.seed));

  json m;
  m["schema_version"] = 1;
  m["seed"] = a.seed;
  m["cwe"] = cwe;
  m["source"] = {{"path", source_path},
                 {"format", source_format},
                 {"test_path", a.test.empty() ? json(nullptr) : json(a.test)}};
  m["balanced"] = "train";
  m["splits"] = {{"train", split_entry(train, "train.csv")},
                 {"test", split_entry(test, "test.csv")}};
  m["counts"] = {{"train", train.size()},
                 {"test", test.size()},
                 {"total", train.size() + test.size()}};
  write_json(out / "manifest.json", m);
  std::cout << m.dump(2) << '\n';
  return kExitOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out, cwe = "CWE-476", format, pooling;
  std::optional<std::uint64_t> seed;
  std::string report_format = "json";
};

RunConfig resolve_config(const std::string &path, std::optional<std::uint64_t> seed,
                         const std::string &pooling) {
  RunConfig c = path.empty() ? RunConfig{} : RunConfig::load(path);
  if (seed) c.seed = *seed;
  if (!pooling.empty()) c.pooling = parse_pooling_mode(pooling);
  return c;
}

int cmd_train(const TrainArgs &a) {
  const RunConfig config = resolve_config(a.config, a.seed, a.pooling);
  const fs::path train_file = resolve_split(a.data, "train");
  const LabeledDataset train_set = load_any(train_file, a.cwe, a.format);
  std::optional<LabeledDataset> eval_set;
  if (fs::is_directory(a.data) && fs::exists(fs::path(a.data) / "test.csv"))
    eval_set = load_any(fs::path(a.data) / "test.csv", a.cwe, "csv");

  const fs::path out = a.out;
  fs::create_directories(out);
  write_json(out / "config.json", config.to_json());
  auto model = config.build(config.seed);
  const std::string hash = dataset_hash(a.data, train_file);

  std::vector<EpochStats> history;
  auto on_epoch = [&](const EpochStats &stats, Classifier &m) {
    history.push_back(stats);
    save_checkpoint(m, out / ("epoch-" + std::to_string(stats.epoch)),
                    {config.seed, stats.epoch, hash});
    std::cerr << "epoch " << stats.epoch << ": loss " << stats.train_loss;
    if (stats.eval) std::cerr << ", accuracy " << stats.eval->accuracy;
    std::cerr << '\n';
  };
  try {
    train(*model, train_set, config.train_config(), eval_set ? &*eval_set : nullptr,
          on_epoch);
  } catch (const TrainingDiverged &e) {
    json snap = e.snapshot();
    snap["seed"] = config.seed;
    snap["completed_epochs"] = epochs_to_json(history)["epochs"];
    write_json(out / "divergence.json", snap);
    throw;
  }
  save_checkpoint(*model, out / "final",
                  {config.seed, config.num_train_epochs, hash});
  const json metrics = epochs_to_json(history);
  write_json(out / "metrics.json", metrics);
  std::cout << metrics.dump(2) << '\n';
  return kExitOk;
}

// ---- evaluate / crossval ---------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, cwe = "CWE-476", format, out;
  std::size_t threads = 0;
  std::string report_format = "json";
};

int cmd_evaluate(const EvalArgs &a) {
  LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
  const LabeledDataset data = load_any(resolve_split(a.data, "test"), a.cwe, a.format);
  const MetricsReport report = evaluate(*ckpt.model, data, a.threads);
  json j;
  j["schema_version"] = 1;
  j["checkpoint"] = {{"path", a.checkpoint},
                     {"manifest_hash", content_hash(ckpt.manifest.dump())}};
  j["samples"] = data.size();
  j.update(report.to_json());
  emit(j, a.out);
  return kExitOk;
}

struct CrossvalArgs {
  std::string config, data, cwe = "CWE-476", format, out, pooling;
  std::optional<std::uint64_t> seed;
  std::size_t k = 5;
  std::string report_format = "json";
};

int cmd_crossval(const CrossvalArgs &a) {
  const RunConfig config = resolve_config(a.config, a.seed, a.pooling);
  const LabeledDataset data = load_any(resolve_split(a.data, "train"), a.cwe, a.format);
  const CvReport report = cross_validate(
      [&](std::uint64_t seed) { return config.build(seed); }, data, a.k,
      config.train_config());
  emit(report.to_json(), a.out);
  return kExitOk;
}

// ---- scan / inspect --------------------------------------------------------

struct ScanArgs {
  std::vector<std::string> paths;
  std::string checkpoint, out;
  double threshold = 0.5;
  std::size_t threads = 0;
  std::string report_format = "json";
};

int cmd_scan(const ScanArgs &a) {
  LoadedCheckpoint ckpt = load_checkpoint(a.checkpoint);
  std::vector<fs::path> inputs(a.paths.begin(), a.paths.end());
  const auto files = collect_sources(inputs);
  ScanReport report = scan_files(*ckpt.model, files, {a.threshold, a.threads});
  report.timestamp = utc_timestamp();
  report.checkpoint = {{"path", a.checkpoint},
                       {"manifest_hash", content_hash(ckpt.manifest.dump())}};
  emit(report.to_json(), a.out);
  return report.exit_code();
}

int cmd_inspect(const std::string &checkpoint) {
  std::cout << read_manifest(checkpoint).dump(2) << '\n';
  return kExitOk;
}

void add_format(CLI::App *cmd, std::string &target) {
  cmd->add_option("--format", target, "Report format")
      ->check(CLI::IsMember({"json"}))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Null-pointer-dereference detector for C/C++ functions"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto *c_ingest = app.add_subcommand("ingest", "Load, balance and split a labeled corpus");
  c_ingest->add_option("--data", ingest.data, "Dataset file (.csv, .h5/.hdf5)");
  c_ingest->add_option("--test", ingest.test, "Separate test-split file (kept unbalanced)");
  c_ingest->add_option("--cwe", ingest.cwe, "CWE label column")->capture_default_str();
  c_ingest->add_option("--input-format", ingest.format, "csv or hdf5-vdisc (default: by extension)");
  c_ingest->add_option("--seed", ingest.seed)->capture_default_str();
  c_ingest->add_option("--holdout", ingest.holdout, "Test fraction when --test is absent")
      ->check(CLI::Range(0.0, 0.99))
      ->capture_default_str();
  c_ingest->add_option("--synthetic", ingest.synthetic, "Generate N synthetic samples instead");
  c_ingest->add_option("--out", ingest.out, "Output directory")->required();
  add_format(c_ingest, ingest.report_format);

  TrainArgs tr;
  auto *c_train = app.add_subcommand("train", "Train a model and write per-epoch checkpoints");
  c_train->add_option("--config", tr.config, "Run config JSON");
  c_train->add_option("--data", tr.data, "Ingest directory or dataset file")->required();
  c_train->add_option("--out", tr.out, "Output directory")->required();
  c_train->add_option("--seed", tr.seed, "Override the config seed");
  c_train->add_option("--pooling", tr.pooling, "Override the pooling mode")
      ->check(CLI::IsMember({"final_cls", "mean_layers_cls", "concat_layers_cls"}));
  c_train->add_option("--cwe", tr.cwe)->capture_default_str();
  c_train->add_option("--input-format", tr.format);
  add_format(c_train, tr.report_format);

  EvalArgs ev;
  auto *c_eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on labeled data");
  c_eval->add_option("--checkpoint", ev.checkpoint)->required();
  c_eval->add_option("--data", ev.data, "Ingest directory (uses test.csv) or dataset file")
      ->required();
  c_eval->add_option("--out", ev.out, "Write the report here instead of stdout");
  c_eval->add_option("--threads", ev.threads)->capture_default_str();
  c_eval->add_option("--cwe", ev.cwe)->capture_default_str();
  c_eval->add_option("--input-format", ev.format);
  add_format(c_eval, ev.report_format);

  CrossvalArgs cv;
  auto *c_cv = app.add_subcommand("crossval", "k-fold cross-validation");
  c_cv->add_option("--config", cv.config, "Run config JSON");
  c_cv->add_option("--data", cv.data, "Ingest directory (uses train.csv) or dataset file")
      ->required();
  c_cv->add_option("--k", cv.k)->check(CLI::PositiveNumber)->capture_default_str();
  c_cv->add_option("--seed", cv.seed, "Override the config seed");
  c_cv->add_option("--pooling", cv.pooling)
      ->check(CLI::IsMember({"final_cls", "mean_layers_cls", "concat_layers_cls"}));
  c_cv->add_option("--out", cv.out, "Write the report here instead of stdout");
  c_cv->add_option("--cwe", cv.cwe)->capture_default_str();
  c_cv->add_option("--input-format", cv.format);
  add_format(c_cv, cv.report_format);

  ScanArgs sc;
  auto *c_scan = app.add_subcommand("scan", "Classify every function in C/C++ sources");
  c_scan->add_option("paths", sc.paths, "Files or directories")->required();
  c_scan->add_option("--checkpoint", sc.checkpoint)->required();
  c_scan->add_option("--threshold", sc.threshold, "Minimum confidence to report a finding")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c_scan->add_option("--threads", sc.threads)->capture_default_str();
  c_scan->add_option("--out", sc.out, "Write the report here instead of stdout");
  add_format(c_scan, sc.report_format);

  std::string inspect_ckpt;
  std::string inspect_format = "json";
  auto *c_inspect = app.add_subcommand("inspect", "Print a checkpoint manifest");
  c_inspect->add_option("--checkpoint", inspect_ckpt)->required();
  add_format(c_inspect, inspect_format);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (c_ingest->parsed()) return cmd_ingest(ingest);
    if (c_train->parsed()) return cmd_train(tr);
    if (c_eval->parsed()) return cmd_evaluate(ev);
    if (c_cv->parsed()) return cmd_crossval(cv);
    if (c_scan->parsed()) return cmd_scan(sc);
    if (c_inspect->parsed()) return cmd_inspect(inspect_ckpt);
  } catch (const Error &e) {
    std::cerr << "nullscan: error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception &e) {
    std::cerr << "nullscan: error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
