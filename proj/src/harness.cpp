#include "cvote/harness.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <thread>

#include "cvote/voting.hpp"

namespace cvote {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

EmbeddingDataset load_data(const RunConfig& config) {
  if (config.synthetic) return generate_synthetic(*config.synthetic);
  EmbeddingDataset ds;
  ds.train = load_embeddings(*config.train_path);
  ds.test = load_embeddings(*config.test_path);
  return ds;
}

EmbeddingSet relabel(const EmbeddingSet& in, const std::vector<ClassIndex>& internal_of) {
  EmbeddingSet out;
  out.dim = in.dim;
  out.records.reserve(in.records.size());
  for (const auto& r : in.records) out.records.push_back({r.feature, internal_of.at(r.label)});
  return out;
}

// Predictions for records[i] at index i; chunks are independent so the result
// does not depend on the thread count.
std::vector<ClassIndex> evaluate(const Predictor& predictor, const std::vector<const EmbeddingRecord*>& records,
                                 PredictionMode mode, std::uint32_t threads) {
  std::vector<ClassIndex> out(records.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = predictor.predict(records[i]->feature, mode);
  };
  std::size_t n_threads = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
  n_threads = std::min<std::size_t>(n_threads, std::max<std::size_t>(1, records.size() / 64));
  if (n_threads <= 1) {
    work(0, records.size());
    return out;
  }
  std::vector<std::exception_ptr> errors(n_threads);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (records.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(std::min(records.size(), t * chunk), std::min(records.size(), (t + 1) * chunk));
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

AvgLast avg_last(std::span<const double> per_step) {
  if (per_step.empty()) fail(ErrorKind::numeric, "avg_last: no steps");
  const double sum = std::accumulate(per_step.begin(), per_step.end(), 0.0);
  return {sum / static_cast<double>(per_step.size()), per_step.back()};
}

ConfusionMatrix confusion(std::span<const ClassIndex> predictions, std::span<const ClassIndex> truths,
                          std::uint32_t classes) {
  check_same_dim(predictions.size(), truths.size(), "confusion");
  ConfusionMatrix m(classes, std::vector<std::uint64_t>(classes, 0));
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i] >= classes || predictions[i] >= classes) {
      fail(ErrorKind::numeric, "confusion: class index out of range at sample " + std::to_string(i));
    }
    ++m[truths[i]][predictions[i]];
  }
  return m;
}

BiasReport bias_report(const SingleHeadClassifier& clf, const TaskSplit& split,
                       std::span<const ClassIndex> eval_predictions) {
  BiasReport r;
  r.norms = clf.weight_norms();
  r.task_of_class.resize(r.norms.size(), 0);
  std::vector<std::pair<double, double>> points;
  for (ClassIndex c = 0; c < r.norms.size(); ++c) {
    r.task_of_class[c] = split.task_of(c);
    points.emplace_back(static_cast<double>(c), r.norms[c]);
  }
  std::size_t tasks = 0;
  for (auto t : r.task_of_class) tasks = std::max<std::size_t>(tasks, t + 1);
  r.task_mean_norms.assign(tasks, 0.0);
  std::vector<std::size_t> counts(tasks, 0);
  for (ClassIndex c = 0; c < r.norms.size(); ++c) {
    r.task_mean_norms[r.task_of_class[c]] += r.norms[c];
    ++counts[r.task_of_class[c]];
  }
  for (std::size_t k = 0; k < tasks; ++k) {
    if (counts[k] > 0) r.task_mean_norms[k] /= static_cast<double>(counts[k]);
  }
  if (points.size() >= 2) r.trend = least_squares_line(points);

  if (!eval_predictions.empty() && tasks > 0) {
    std::size_t newest = 0;
    for (ClassIndex p : eval_predictions) {
      if (p < r.task_of_class.size() && r.task_of_class[p] == tasks - 1) ++newest;
    }
    r.newest_task_fraction = static_cast<double>(newest) / static_cast<double>(eval_predictions.size());
  }
  return r;
}

MetricsReport run_experiment(const RunConfig& config, const RunHooks& hooks) {
  config.validate();
  EmbeddingDataset data = load_data(config);
  return run_experiment(config, data, hooks);
}

MetricsReport run_experiment(const RunConfig& config, const EmbeddingDataset& data, const RunHooks& hooks) {
  config.validate_params();
  data.validate();

  MetricsReport report;
  report.config = config;
  const std::uint32_t num_classes = std::max(data.train.num_classes(), data.test.num_classes());
  if (num_classes == 0) return report;

  const TaskSplit dataset_split =
      make_task_split(num_classes, config.step_size,
                      config.shuffle_classes ? std::optional(config.seeds.class_order_seed()) : std::nullopt);
  report.class_order = dataset_split.order();
  std::vector<ClassIndex> internal_of(num_classes);
  for (ClassIndex i = 0; i < report.class_order.size(); ++i) internal_of[report.class_order[i]] = i;
  TaskSplit split = dataset_split;
  for (auto& task : split.tasks) {
    for (auto& c : task) c = internal_of[c];
  }
  const EmbeddingSet train = relabel(data.train, internal_of);
  const EmbeddingSet test = relabel(data.test, internal_of);
  report.train_records = train.records.size();

  const AugmentConfig augment_cfg = config.augment();
  SingleHeadClassifier clf(data.dim(), config.learning_rate, config.seeds.init_seed());
  ExemplarSet exemplars(config.capacity, data.dim());
  RngStream pairing_rng = RngStream::derive(config.seeds.augment_seed(), 1);
  RngStream pilot_rng = RngStream::derive(config.seeds.augment_seed(), 2);

  for (std::size_t k = 0; k < split.num_tasks(); ++k) {
    const auto learn_start = Clock::now();
    const auto& task_classes = split.tasks[k];
    const std::uint32_t seen = split.classes_through(k);
    clf.expand(static_cast<std::uint32_t>(task_classes.size()));
    // Reserve quota for the incoming classes so every store stays within
    // min(q, n) while the stream runs.
    exemplars.rebalance(seen);

    const std::uint32_t epochs = k == 0 ? config.first_task_epochs : config.epochs_per_task;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::uint32_t epoch = 0; epoch < epochs; ++epoch) {
      const std::uint64_t order_seed = RngStream::derive(config.seeds.data_seed(), (k << 16) | epoch).next_u64();
      for (const auto& batch : stream_task(train, split, k, order_seed, config.batch_size)) {
        // Each record enters the exemplar sampler once, on its first pass.
        if (epoch == 0) {
          for (const auto& rec : batch.records) exemplars.observe(rec, static_cast<TaskIndex>(k));
        }
        const TrainBatch tb =
            config.replay ? build_pair_batch(batch, exemplars, augment_cfg, pairing_rng) : new_data_batch(batch);
        loss_sum += clf.train_step(tb);
        ++loss_count;
      }
    }
    if (config.freeze) clf.freeze(task_classes);
    exemplars.rebalance(seen);

    VoteParams params = config.vote;
    if (config.vote.beta_mode == BetaMode::pilot) {
      params.beta = estimate_beta_pilot(exemplars, augment_cfg, params.eps_r, pilot_rng, config.vote.beta);
    }
    if (hooks.on_task_end) hooks.on_task_end(k, clf, exemplars);
    PhaseTiming timing;
    timing.learn_seconds = seconds_since(learn_start);

    const auto eval_start = Clock::now();
    std::vector<const EmbeddingRecord*> eval_records;
    for (const auto& r : test.records) {
      if (r.label < seen) eval_records.push_back(&r);
    }
    const Predictor predictor(clf, exemplars, params);
    StepMetrics step;
    step.task = k;
    step.classes_seen = seen;
    step.beta = params.beta;
    step.mean_train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    step.predictions = evaluate(predictor, eval_records, config.mode, config.eval_threads);
    step.truths.reserve(eval_records.size());
    for (const auto* r : eval_records) step.truths.push_back(r->label);
    step.test_count = eval_records.size();
    const std::uint32_t newest_begin = seen - static_cast<std::uint32_t>(task_classes.size());
    std::size_t newest = 0;
    for (std::size_t i = 0; i < step.test_count; ++i) {
      if (step.predictions[i] == step.truths[i]) ++step.correct;
      if (step.predictions[i] >= newest_begin) ++newest;
    }
    if (step.test_count > 0) {
      step.accuracy = static_cast<double>(step.correct) / static_cast<double>(step.test_count);
      step.newest_task_fraction = static_cast<double>(newest) / static_cast<double>(step.test_count);
    }
    step.confusion = confusion(step.predictions, step.truths, seen);
    timing.eval_seconds = seconds_since(eval_start);

    report.accuracies.push_back(step.accuracy);
    report.steps.push_back(std::move(step));
    report.timing.push_back(timing);
  }

  if (!report.accuracies.empty()) {
    const auto al = avg_last(report.accuracies);
    report.avg_accuracy = al.avg;
    report.last_accuracy = al.last;
  }
  report.bias = bias_report(clf, split, report.steps.empty() ? std::span<const ClassIndex>{}
                                                             : std::span<const ClassIndex>(report.steps.back().predictions));
  report.storage = storage_bytes(exemplars);
  report.train_steps = clf.steps();
  report.new_samples_trained = clf.new_samples_trained();
  return report;
}

}  // namespace cvote
