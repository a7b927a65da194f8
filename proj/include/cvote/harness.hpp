#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "cvote/classifier.hpp"
#include "cvote/config.hpp"
#include "cvote/exemplar_store.hpp"

namespace cvote {

using ConfusionMatrix = std::vector<std::vector<std::uint64_t>>;

struct StepMetrics {
  std::size_t task = 0;
  std::uint32_t classes_seen = 0;
  std::size_t test_count = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  double mean_train_loss = 0.0;
  double beta = 0.0;
  // Share of predictions that land in this step's (newest) task classes.
  double newest_task_fraction = 0.0;
  ConfusionMatrix confusion;
  std::vector<ClassIndex> truths;
  std::vector<ClassIndex> predictions;
};

struct BiasReport {
  std::vector<double> norms;
  std::vector<TaskIndex> task_of_class;
  std::vector<double> task_mean_norms;
  // Least-squares line over (class index, norm); unset with fewer than 2 classes.
  std::optional<LineFit> trend;
  double newest_task_fraction = 0.0;
};

struct PhaseTiming {
  double learn_seconds = 0.0;
  double eval_seconds = 0.0;
};

struct MetricsReport {
  RunConfig config;
  std::vector<StepMetrics> steps;
  std::vector<double> accuracies;
  std::optional<double> avg_accuracy;
  std::optional<double> last_accuracy;
  BiasReport bias;
  StorageReport storage;
  // Internal class id -> dataset label. Classes are renumbered so that each
  // task owns a contiguous block, in split order.
  std::vector<ClassIndex> class_order;
  std::uint64_t train_steps = 0;
  std::uint64_t new_samples_trained = 0;
  std::uint64_t train_records = 0;
  // Wall-clock excludes file I/O; kept out of metrics.json so that file stays
  // bitwise reproducible.
  std::vector<PhaseTiming> timing;
};

struct RunHooks {
  // Called after each task is learned, frozen and rebalanced, before evaluation.
  std::function<void(std::size_t task, const SingleHeadClassifier&, const ExemplarSet&)> on_task_end;
};

struct AvgLast {
  double avg;
  double last;
};
AvgLast avg_last(std::span<const double> per_step);

ConfusionMatrix confusion(std::span<const ClassIndex> predictions, std::span<const ClassIndex> truths,
                          std::uint32_t classes);

BiasReport bias_report(const SingleHeadClassifier& clf, const TaskSplit& split,
                       std::span<const ClassIndex> eval_predictions);

// Loads (or generates) the data, then for each task: expand, stream with
// observe + pairing + SGD, freeze, rebalance, optional pilot beta, evaluate on
// every test record of the classes seen so far.
MetricsReport run_experiment(const RunConfig& config, const RunHooks& hooks = {});
// Same protocol on an already loaded dataset.
MetricsReport run_experiment(const RunConfig& config, const EmbeddingDataset& data, const RunHooks& hooks = {});

nlohmann::json metrics_to_json(const MetricsReport& report);

// metrics.json, accuracy_curve.csv, confusion_step{k}.csv, predictions_step{k}.csv,
// weight_norms.csv, storage.json, timing.json and optionally curve.svg.
void emit(const MetricsReport& report, const std::filesystem::path& outdir);

std::string accuracy_svg(std::span<const double> accuracies);

struct RecomputedMetrics {
  std::vector<double> accuracies;
  std::optional<double> avg_accuracy;
  std::optional<double> last_accuracy;
  std::vector<ConfusionMatrix> confusions;
};
// Rebuild accuracies and confusion matrices from predictions_step{k}.csv files.
RecomputedMetrics recompute_from_predictions(const std::filesystem::path& dir);
// accuracy_curve.csv and confusion_step{k}.csv for recomputed metrics.
void emit_recomputed(const RecomputedMetrics& metrics, const std::filesystem::path& outdir);

}  // namespace cvote
