#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "nullscan/dataset.hpp"
#include "nullscan/errors.hpp"
#include "nullscan/model.hpp"

namespace nullscan {

struct TrainConfig {
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  std::size_t epochs = 3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 42;
  /// Worker threads for evaluation; 0 = hardware concurrency. Training is
  /// always a single optimizer stream.
  std::size_t eval_threads = 0;

  void validate() const;
};

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  ConfusionMatrix &operator+=(const ConfusionMatrix &o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionMatrix &,
                         const ConfusionMatrix &) = default;
};

/// Zero denominators yield 0 and set the matching *_undefined flag.
struct MetricsReport {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  ConfusionMatrix cm;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;

  nlohmann::ordered_json to_json() const;
  friend bool operator==(const MetricsReport &, const MetricsReport &) = default;
};

struct MetricSummary {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  nlohmann::ordered_json to_json() const;
};

struct CvReport {
  std::vector<MetricsReport> folds;
  MetricSummary mean;
  MetricSummary stddev;  // population standard deviation over folds
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimizer steps in this epoch
  double train_loss = 0;  // mean per-sample loss
  std::optional<MetricsReport> eval;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const;
};

/// Thrown when a batch produces a non-finite loss or gradient.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string &what, std::size_t epoch,
                   std::size_t step, double loss)
      : NumericalError(what), epoch_(epoch), step_(step), loss_(loss) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t step() const noexcept { return step_; }
  double loss() const noexcept { return loss_; }
  nlohmann::ordered_json snapshot() const;

 private:
  std::size_t epoch_, step_;
  double loss_;
};

ConfusionMatrix confusion(std::span<const int> predictions,
                          std::span<const int> labels);
ConfusionMatrix confusion(std::span<const Verdict> predictions,
                          std::span<const int> labels);

MetricsReport metrics(const ConfusionMatrix &cm);

/// Eval-mode predictions, sharded over worker threads, returned in input
/// order.
std::vector<VulnPrediction> predict_all(const Classifier &model,
                                        std::span<const TokenizedSample> samples,
                                        std::size_t threads = 0);

MetricsReport evaluate(const Classifier &model,
                       std::span<const TokenizedSample> samples,
                       std::span<const int> labels, std::size_t threads = 0);
MetricsReport evaluate(const Classifier &model, const LabeledDataset &data,
                       std::size_t threads = 0);

/// Called after each epoch (and its evaluation).
using EpochCallback =
    std::function<void(const EpochStats &stats, Classifier &model)>;

/// Seeded per-epoch shuffle, batches of batch_size (remainder kept), AdamW
/// per batch. When `eval_data` is given it is evaluated after every epoch.
std::vector<EpochStats> train(Classifier &model, const LabeledDataset &data,
                              const TrainConfig &config,
                              const LabeledDataset *eval_data = nullptr,
                              const EpochCallback &on_epoch = {});

using ClassifierFactory =
    std::function<std::unique_ptr<Classifier>(std::uint64_t seed)>;

/// k-fold protocol: for each fold a fresh model from `factory`, trained on
/// the out-of-fold samples and evaluated on the fold.
CvReport cross_validate(const ClassifierFactory &factory,
                        const LabeledDataset &data, std::size_t k,
                        const TrainConfig &config);

MetricSummary summarize_mean(std::span<const MetricsReport> folds);
MetricSummary summarize_stddev(std::span<const MetricsReport> folds);

nlohmann::ordered_json epochs_to_json(std::span<const EpochStats> epochs);

}  // namespace nullscan
