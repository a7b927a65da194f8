// cvote: run candidate-voting continual learning experiments on embedding
// streams, generate synthetic data, inspect files and recompute metrics.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "cvote/classifier.hpp"
#include "cvote/config.hpp"
#include "cvote/datastream.hpp"
#include "cvote/exemplar_store.hpp"
#include "cvote/harness.hpp"

namespace {

using namespace cvote;
using nlohmann::json;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return kExitConfig;
    case ErrorKind::data:
    case ErrorKind::io: return kExitData;
    case ErrorKind::dimension:
    case ErrorKind::numeric: return kExitNumeric;
  }
  return kExitNumeric;
}

struct RunFlags {
  std::string config, train, test, mode, out;
  std::optional<std::uint32_t> step_size, capacity, batch_size, epochs, first_task_epochs, threads;
  std::optional<double> beta, eps_n, eps_r, alpha_r, lr;
  std::optional<std::uint64_t> seed;
  bool pilot_beta = false;
  std::optional<bool> freeze, replay, augment;
  bool no_svg = false;
};

RunConfig resolve_config(const RunFlags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (!f.train.empty() || !f.test.empty()) c.synthetic.reset();
  if (!f.train.empty()) c.train_path = f.train;
  if (!f.test.empty()) c.test_path = f.test;
  if (f.step_size) c.step_size = *f.step_size;
  if (f.capacity) c.capacity = *f.capacity;
  if (f.batch_size) c.batch_size = *f.batch_size;
  if (f.epochs) c.epochs_per_task = *f.epochs;
  if (f.first_task_epochs) c.first_task_epochs = *f.first_task_epochs;
  if (f.threads) c.eval_threads = *f.threads;
  if (f.lr) c.learning_rate = *f.lr;
  if (f.beta) c.vote.beta = *f.beta;
  if (f.pilot_beta) c.vote.beta_mode = BetaMode::pilot;
  if (f.eps_n) c.vote.eps_n = *f.eps_n;
  if (f.eps_r) c.vote.eps_r = *f.eps_r;
  if (f.alpha_r) c.alpha_r = *f.alpha_r;
  if (f.seed) c.seeds.base = *f.seed;
  if (f.freeze) c.freeze = *f.freeze;
  if (f.replay) c.replay = *f.replay;
  if (f.augment) c.augment_enabled = *f.augment;
  if (f.no_svg) c.write_svg = false;
  if (!f.mode.empty()) {
    auto m = parse_prediction_mode(f.mode);
    if (!m) fail(ErrorKind::config, "unknown mode '" + f.mode + "'");
    c.mode = *m;
  }
  if (!f.out.empty()) c.out_dir = f.out;
  if (c.out_dir.empty()) c.out_dir = "cvote_out";
  c.validate();
  return c;
}

int cmd_run(const RunFlags& flags) {
  const RunConfig config = resolve_config(flags);
  const MetricsReport report = run_experiment(config);
  emit(report, config.out_dir);
  std::printf("tasks=%zu", report.steps.size());
  if (report.avg_accuracy) std::printf(" avg=%.4f last=%.4f", *report.avg_accuracy, *report.last_accuracy);
  std::printf(" out=%s\n", config.out_dir.c_str());
  return 0;
}

json set_summary(const EmbeddingSet& s) {
  std::vector<std::size_t> per_class(s.num_classes(), 0);
  for (const auto& r : s.records) ++per_class[r.label];
  return {{"dim", s.dim}, {"records", s.records.size()}, {"classes", s.num_classes()}, {"per_class", per_class}};
}

int cmd_inspect(const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (fp == nullptr) fail(ErrorKind::data, "cannot open " + path);
  char magic[4] = {0, 0, 0, 0};
  const std::size_t got = std::fread(magic, 1, 4, fp);
  std::fclose(fp);
  const std::string m(magic, got);
  json out;
  if (m == "CVEB") {
    out = set_summary(load_embeddings(path, EmbeddingFormat::cveb));
    out["format"] = "CVEB";
  } else if (m == "CVES") {
    const ExemplarSet set = load_snapshot(path, 0);
    std::map<std::string, std::size_t> per_class;
    for (const auto& [label, s] : set.stores()) per_class[std::to_string(label)] = s.items.size();
    const auto st = storage_bytes(set);
    out = {{"format", "CVES"},
           {"dim", set.dim()},
           {"exemplars", set.total_stored()},
           {"classes", set.num_classes()},
           {"tasks", set.num_tasks()},
           {"per_class", per_class},
           {"feature_bytes", st.feature_bytes},
           {"metadata_bytes", st.metadata_bytes}};
  } else if (m == "CVWT") {
    const SingleHeadClassifier clf = load_checkpoint(path);
    out = {{"format", "CVWT"},
           {"classes", clf.num_classes()},
           {"dim", clf.dim()},
           {"frozen", clf.frozen_classes()},
           {"norms", clf.weight_norms()}};
  } else if (format_from_path(path) == EmbeddingFormat::csv) {
    out = set_summary(load_embeddings(path, EmbeddingFormat::csv));
    out["format"] = "CSV";
  } else {
    fail(ErrorKind::data, path + ": unrecognized file (magic '" + m + "')");
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Candidate-voting online class-incremental learning on feature embeddings"};
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run an experiment from a config file and/or flags");
  run->add_option("--config", rf.config, "JSON config file");
  run->add_option("--train", rf.train, "Training embeddings (.cveb or .csv)");
  run->add_option("--test", rf.test, "Test embeddings (.cveb or .csv)");
  run->add_option("--step-size", rf.step_size, "Classes per task");
  run->add_option("--capacity", rf.capacity, "Total exemplar budget Q");
  run->add_option("--mode", rf.mode, "baseline|baseline-ea|cs-pnn|full");
  run->add_option("--beta", rf.beta, "Fixed incorporation constant in (0,1)");
  run->add_flag("--pilot-beta", rf.pilot_beta, "Estimate beta from the augmented pilot set");
  run->add_option("--eps-n", rf.eps_n, "Candidate normalization regularizer");
  run->add_option("--eps-r", rf.eps_r, "Prior distance regularizer");
  run->add_option("--alpha-r", rf.alpha_r, "Augmentation noise scale");
  run->add_option("--lr", rf.lr, "SGD learning rate");
  run->add_option("--batch-size", rf.batch_size, "New records per mini-batch");
  run->add_option("--epochs", rf.epochs, "Epochs per task after the first");
  run->add_option("--first-task-epochs", rf.first_task_epochs, "Epochs for the first task");
  run->add_option("--seed", rf.seed, "Base seed");
  run->add_option("--out", rf.out, "Output directory");
  run->add_option("--threads", rf.threads, "Evaluation threads (0 = all cores)");
  run->add_flag("--freeze,!--no-freeze", rf.freeze, "Freeze each task's weight rows after learning it");
  run->add_flag("--replay,!--no-replay", rf.replay, "Pair new records with replayed exemplars");
  run->add_flag("--augment,!--no-augment", rf.augment, "Augment replayed exemplars");
  run->add_flag("--no-svg", rf.no_svg, "Skip curve.svg");

  SynthConfig sc;
  std::string synth_out = ".";
  std::string synth_format = "cveb";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic Gaussian-cluster train/test pair");
  synth->add_option("--tasks", sc.num_tasks, "Number of tasks");
  synth->add_option("--classes-per-task", sc.classes_per_task, "Classes per task");
  synth->add_option("--dim", sc.dim, "Feature dimension");
  synth->add_option("--train-per-class", sc.train_per_class, "Training records per class");
  synth->add_option("--test-per-class", sc.test_per_class, "Test records per class");
  synth->add_option("--std", sc.cluster_std, "Cluster standard deviation");
  synth->add_option("--separation", sc.cluster_separation, "Distance between class means in units of std");
  synth->add_option("--seed", sc.seed, "Seed");
  synth->add_option("--out", synth_out, "Output directory (train.<fmt>, test.<fmt>)");
  synth->add_option("--format", synth_format, "cveb|csv")->check(CLI::IsMember({"cveb", "csv"}));

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Print the header and summary of a CVEB/CSV/CVES/CVWT file");
  inspect->add_option("path", inspect_path, "File to inspect")->required();

  std::string report_dir, report_out;
  auto* report = app.add_subcommand("report", "Recompute metrics from saved predictions_step*.csv files");
  report->add_option("dir", report_dir, "Run output directory")->required();
  report->add_option("--out", report_out, "Write accuracy_curve.csv and confusion_step*.csv here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(rf);
    if (*synth) {
      const auto ds = generate_synthetic(sc);
      const auto fmt = synth_format == "csv" ? EmbeddingFormat::csv : EmbeddingFormat::cveb;
      std::filesystem::create_directories(synth_out);
      const std::string ext = synth_format == "csv" ? ".csv" : ".cveb";
      save_embeddings(ds.train, std::filesystem::path(synth_out) / ("train" + ext), fmt);
      save_embeddings(ds.test, std::filesystem::path(synth_out) / ("test" + ext), fmt);
      std::printf("wrote %zu train / %zu test records (D=%u, %u classes) to %s\n", ds.train.records.size(),
                  ds.test.records.size(), ds.dim(), ds.num_classes(), synth_out.c_str());
      return 0;
    }
    if (*inspect) return cmd_inspect(inspect_path);
    if (*report) {
      const auto m = recompute_from_predictions(report_dir);
      json j = {{"accuracies", m.accuracies}, {"avg_accuracy", *m.avg_accuracy}, {"last_accuracy", *m.last_accuracy}};
      std::cout << j.dump(2) << "\n";
      if (!report_out.empty()) emit_recomputed(m, report_out);
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
