#include "nullscan/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "nullscan/adamw.hpp"
#include "nullscan/rng.hpp"

namespace nullscan {

using json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0))
    throw InputError("learning_rate and weight_decay must be non-negative");
}

json MetricsReport::to_json() const {
  json j{{"accuracy", accuracy}, {"precision", precision}, {"f1", f1},
         {"recall", recall},     {"tp", cm.tp},            {"fp", cm.fp},
         {"tn", cm.tn},          {"fn", cm.fn}};
  if (precision_undefined || recall_undefined || f1_undefined) {
    json flags = json::array();
    if (precision_undefined) flags.push_back("precision");
    if (recall_undefined) flags.push_back("recall");
    if (f1_undefined) flags.push_back("f1");
    j["undefined"] = std::move(flags);
  }
  return j;
}

json MetricSummary::to_json() const {
  return {{"accuracy", accuracy},
          {"precision", precision},
          {"f1", f1},
          {"recall", recall}};
}

json CvReport::to_json() const {
  json j;
  j["schema_version"] = 1;
  j["k"] = folds.size();
  j["seed"] = seed;
  json rows = json::array();
  for (std::size_t i = 0; i < folds.size(); ++i) {
    json row{{"fold", i + 1}};
    row.update(folds[i].to_json());
    rows.push_back(std::move(row));
  }
  j["folds"] = std::move(rows);
  j["mean"] = mean.to_json();
  j["std"] = stddev.to_json();
  return j;
}

json EpochStats::to_json() const {
  json j{{"epoch", epoch}, {"seed", seed}, {"steps", steps},
         {"train_loss", train_loss}};
  if (eval) j.update(eval->to_json());
  return j;
}

json TrainingDiverged::snapshot() const {
  return {{"error", what()}, {"epoch", epoch_}, {"step", step_},
          {"loss", std::isfinite(loss_) ? json(loss_) : json(nullptr)}};
}

json epochs_to_json(std::span<const EpochStats> epochs) {
  json j;
  j["schema_version"] = 1;
  json rows = json::array();
  for (const EpochStats &e : epochs) rows.push_back(e.to_json());
  j["epochs"] = std::move(rows);
  return j;
}

// ---- metrics --------------------------------------------------------------

ConfusionMatrix confusion(std::span<const int> predictions,
                          std::span<const int> labels) {
  if (predictions.size() != labels.size())
    throw InputError("confusion: " + std::to_string(predictions.size()) +
                     " predictions vs " + std::to_string(labels.size()) +
                     " labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = predictions[i] != 0, truth = labels[i] != 0;
    if (pred && truth)
      ++cm.tp;
    else if (pred)
      ++cm.fp;
    else if (truth)
      ++cm.fn;
    else
      ++cm.tn;
  }
  return cm;
}

ConfusionMatrix confusion(std::span<const Verdict> predictions,
                          std::span<const int> labels) {
  std::vector<int> as_int;
  as_int.reserve(predictions.size());
  for (Verdict v : predictions) as_int.push_back(v == Verdict::vulnerable);
  return confusion(std::span<const int>(as_int), labels);
}

MetricsReport metrics(const ConfusionMatrix &cm) {
  if (cm.total() == 0) throw InputError("metrics: empty confusion matrix");
  MetricsReport r;
  r.cm = cm;
  const auto tp = static_cast<double>(cm.tp);
  if (cm.tp + cm.fn == 0)
    r.recall_undefined = true;
  else
    r.recall = tp / static_cast<double>(cm.tp + cm.fn);
  if (cm.tp + cm.fp == 0)
    r.precision_undefined = true;
  else
    r.precision = tp / static_cast<double>(cm.tp + cm.fp);
  if (r.precision + r.recall == 0.0)
    r.f1_undefined = true;
  else
    r.f1 = 2.0 * (r.precision * r.recall) / (r.precision + r.recall);
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  return r;
}

MetricSummary summarize_mean(std::span<const MetricsReport> folds) {
  MetricSummary s;
  if (folds.empty()) return s;
  for (const MetricsReport &m : folds) {
    s.accuracy += m.accuracy;
    s.precision += m.precision;
    s.recall += m.recall;
    s.f1 += m.f1;
  }
  const auto n = static_cast<double>(folds.size());
  s.accuracy /= n;
  s.precision /= n;
  s.recall /= n;
  s.f1 /= n;
  return s;
}

MetricSummary summarize_stddev(std::span<const MetricsReport> folds) {
  MetricSummary s;
  if (folds.empty()) return s;
  const MetricSummary mean = summarize_mean(folds);
  for (const MetricsReport &m : folds) {
    s.accuracy += (m.accuracy - mean.accuracy) * (m.accuracy - mean.accuracy);
    s.precision += (m.precision - mean.precision) * (m.precision - mean.precision);
    s.recall += (m.recall - mean.recall) * (m.recall - mean.recall);
    s.f1 += (m.f1 - mean.f1) * (m.f1 - mean.f1);
  }
  const auto n = static_cast<double>(folds.size());
  s.accuracy = std::sqrt(s.accuracy / n);
  s.precision = std::sqrt(s.precision / n);
  s.recall = std::sqrt(s.recall / n);
  s.f1 = std::sqrt(s.f1 / n);
  return s;
}

// ---- evaluation -----------------------------------------------------------

std::vector<VulnPrediction> predict_all(const Classifier &model,
                                        std::span<const TokenizedSample> samples,
                                        std::size_t threads) {
  std::vector<VulnPrediction> out(samples.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(1, samples.size()));
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = model.predict(samples[i]);
  };
  if (threads <= 1) {
    work(0, samples.size());
    return out;
  }
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (samples.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(samples.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
  }
  return out;
}

MetricsReport evaluate(const Classifier &model,
                       std::span<const TokenizedSample> samples,
                       std::span<const int> labels, std::size_t threads) {
  if (samples.empty()) throw InputError("evaluate: no samples");
  const auto preds = predict_all(model, samples, threads);
  std::vector<int> verdicts;
  verdicts.reserve(preds.size());
  for (const auto &p : preds) verdicts.push_back(p.label());
  return metrics(confusion(std::span<const int>(verdicts), labels));
}

MetricsReport evaluate(const Classifier &model, const LabeledDataset &data,
                       std::size_t threads) {
  if (data.empty()) throw InputError("evaluate: empty dataset");
  const auto sources = data.sources();
  const auto samples = model.tokenizer().encode_batch(sources);
  const auto labels = data.labels();
  return evaluate(model, samples, labels, threads);
}

// ---- training -------------------------------------------------------------

std::vector<EpochStats> train(Classifier &model, const LabeledDataset &data,
                              const TrainConfig &config,
                              const LabeledDataset *eval_data,
                              const EpochCallback &on_epoch) {
  config.validate();
  if (data.empty()) throw InputError("train: empty dataset");
  const auto samples = model.tokenizer().encode_batch(data.sources());
  const auto labels = data.labels();
  std::vector<TokenizedSample> eval_samples;
  std::vector<int> eval_labels;
  if (eval_data && !eval_data->empty()) {
    eval_samples = model.tokenizer().encode_batch(eval_data->sources());
    eval_labels = eval_data->labels();
  }

  AdamW<float> optimizer(AdamWConfig{config.learning_rate, config.weight_decay});
  const ParameterRefs<float> params = model.parameters();
  RngState shuffle_rng(config.seed);
  RngState dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<EpochStats> history;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    EpochStats stats;
    stats.epoch = epoch;
    stats.seed = config.seed;
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (Parameter<float> *p : params) p->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t idx = order[b];
        batch_loss +=
            model.accumulate_gradients(samples[idx], labels[idx], scale, dropout_rng);
      }
      if (!std::isfinite(batch_loss))
        throw TrainingDiverged("non-finite training loss at epoch " +
                                   std::to_string(epoch) + ", step " +
                                   std::to_string(stats.steps + 1),
                               epoch, stats.steps + 1, batch_loss);
      try {
        optimizer.step(params);
      } catch (const NumericalError &e) {
        throw TrainingDiverged(e.what(), epoch, stats.steps + 1, batch_loss);
      }
      loss_sum += batch_loss;
      ++stats.steps;
    }
    stats.train_loss = loss_sum / static_cast<double>(samples.size());
    if (!eval_samples.empty())
      stats.eval = evaluate(model, eval_samples, eval_labels, config.eval_threads);
    history.push_back(stats);
    if (on_epoch) on_epoch(history.back(), model);
  }
  return history;
}

CvReport cross_validate(const ClassifierFactory &factory,
                        const LabeledDataset &data, std::size_t k,
                        const TrainConfig &config) {
  const FoldPlan plan = make_folds(data, k, config.seed);
  CvReport report;
  report.seed = config.seed;
  for (std::size_t fold = 0; fold < k; ++fold) {
    const auto train_idx = plan.training_indices(fold);
    const auto val_idx = plan.validation_indices(fold);
    const LabeledDataset train_set = data.subset(train_idx);
    const LabeledDataset val_set = data.subset(val_idx);
    std::unique_ptr<Classifier> model = factory(config.seed + fold);
    train(*model, train_set, config);
    report.folds.push_back(evaluate(*model, val_set, config.eval_threads));
  }
  report.mean = summarize_mean(report.folds);
  report.stddev = summarize_stddev(report.folds);
  return report;
}

}  // namespace nullscan
