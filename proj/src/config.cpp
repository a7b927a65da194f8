#include "cvote/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <type_traits>

namespace cvote {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) fail(ErrorKind::config, "unknown config key '" + where + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where = "") {
  if (!j.contains(key)) return;
  if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
    const auto& v = j.at(key);
    if (!v.is_number_integer()) fail(ErrorKind::config, "config key '" + where + key + "' must be an integer");
    if (std::is_unsigned_v<T> && !v.is_number_unsigned() && v.get<std::int64_t>() < 0) {
      fail(ErrorKind::config, "config key '" + where + key + "' must be non-negative");
    }
  }
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::config, "config key '" + where + key + "': " + e.what());
  }
}

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& out, const std::string& where = "") {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, key, v, where);
  out = v;
}

SynthConfig synth_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::config, "'synthetic' must be an object");
  reject_unknown(j,
                 {"num_tasks", "classes_per_task", "dim", "train_per_class", "test_per_class", "cluster_std",
                  "cluster_separation", "seed"},
                 "synthetic.");
  SynthConfig s;
  read(j, "num_tasks", s.num_tasks, "synthetic.");
  read(j, "classes_per_task", s.classes_per_task, "synthetic.");
  read(j, "dim", s.dim, "synthetic.");
  read(j, "train_per_class", s.train_per_class, "synthetic.");
  read(j, "test_per_class", s.test_per_class, "synthetic.");
  read(j, "cluster_std", s.cluster_std, "synthetic.");
  read(j, "cluster_separation", s.cluster_separation, "synthetic.");
  read(j, "seed", s.seed, "synthetic.");
  return s;
}

}  // namespace

std::uint64_t SeedConfig::data_seed() const { return data.value_or(RngStream::derive(base, 10).next_u64()); }
std::uint64_t SeedConfig::init_seed() const { return init.value_or(RngStream::derive(base, 11).next_u64()); }
std::uint64_t SeedConfig::augment_seed() const { return augment.value_or(RngStream::derive(base, 12).next_u64()); }
std::uint64_t SeedConfig::class_order_seed() const {
  return class_order.value_or(RngStream::derive(base, 13).next_u64());
}

AugmentConfig RunConfig::augment() const {
  AugmentConfig a;
  a.alpha_r = alpha_r;
  a.enabled = augment_enabled.value_or(mode != PredictionMode::baseline);
  return a;
}

void RunConfig::validate() const {
  validate_source();
  validate_params();
}

void RunConfig::validate_source() const {
  const bool files = train_path.has_value() || test_path.has_value();
  if (files && synthetic) fail(ErrorKind::config, "give either train/test files or a synthetic config, not both");
  if (!files && !synthetic) fail(ErrorKind::config, "no data source: set train and test paths or a synthetic config");
  if (files && (!train_path || !test_path)) fail(ErrorKind::config, "both train and test paths are required");
  if (synthetic) synthetic->validate();
}

void RunConfig::validate_params() const {
  if (step_size == 0) fail(ErrorKind::config, "step_size must be positive");
  if (capacity == 0) fail(ErrorKind::config, "capacity must be positive");
  if (batch_size == 0) fail(ErrorKind::config, "batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail(ErrorKind::config, "learning_rate must be > 0");
  if (epochs_per_task == 0 || first_task_epochs == 0) fail(ErrorKind::config, "epoch counts must be >= 1");
  vote.validate();
  augment().validate();
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorKind::config, "config root must be an object");
  reject_unknown(j,
                 {"train", "test", "synthetic", "step_size", "capacity", "batch_size", "learning_rate",
                  "epochs_per_task", "first_task_epochs", "vote", "augment", "mode", "freeze", "replay",
                  "shuffle_classes", "seed", "seeds", "eval_threads", "out", "svg"},
                 "");
  RunConfig c;
  read_opt(j, "train", c.train_path);
  read_opt(j, "test", c.test_path);
  if (j.contains("synthetic") && !j.at("synthetic").is_null()) c.synthetic = synth_from_json(j.at("synthetic"));
  read(j, "step_size", c.step_size);
  read(j, "capacity", c.capacity);
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "epochs_per_task", c.epochs_per_task);
  read(j, "first_task_epochs", c.first_task_epochs);
  if (j.contains("vote")) {
    const json& v = j.at("vote");
    reject_unknown(v, {"beta", "eps_n", "eps_r", "beta_mode"}, "vote.");
    read(v, "beta", c.vote.beta, "vote.");
    read(v, "eps_n", c.vote.eps_n, "vote.");
    read(v, "eps_r", c.vote.eps_r, "vote.");
    std::string bm = "fixed";
    read(v, "beta_mode", bm, "vote.");
    if (bm == "fixed") {
      c.vote.beta_mode = BetaMode::fixed;
    } else if (bm == "pilot") {
      c.vote.beta_mode = BetaMode::pilot;
    } else {
      fail(ErrorKind::config, "vote.beta_mode must be 'fixed' or 'pilot'");
    }
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    reject_unknown(a, {"alpha_r", "enabled"}, "augment.");
    read(a, "alpha_r", c.alpha_r, "augment.");
    read_opt(a, "enabled", c.augment_enabled, "augment.");
  }
  if (j.contains("mode")) {
    std::string m;
    read(j, "mode", m);
    auto mode = parse_prediction_mode(m);
    if (!mode) fail(ErrorKind::config, "unknown mode '" + m + "'");
    c.mode = *mode;
  }
  read(j, "freeze", c.freeze);
  read(j, "replay", c.replay);
  read(j, "shuffle_classes", c.shuffle_classes);
  read(j, "seed", c.seeds.base);
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    reject_unknown(s, {"data", "init", "augment", "class_order"}, "seeds.");
    read_opt(s, "data", c.seeds.data, "seeds.");
    read_opt(s, "init", c.seeds.init, "seeds.");
    read_opt(s, "augment", c.seeds.augment, "seeds.");
    read_opt(s, "class_order", c.seeds.class_order, "seeds.");
  }
  read(j, "eval_threads", c.eval_threads);
  read(j, "out", c.out_dir);
  read(j, "svg", c.write_svg);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::config, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::config, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
  json j;
  if (c.train_path) j["train"] = *c.train_path;
  if (c.test_path) j["test"] = *c.test_path;
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    j["synthetic"] = {{"num_tasks", s.num_tasks},
                      {"classes_per_task", s.classes_per_task},
                      {"dim", s.dim},
                      {"train_per_class", s.train_per_class},
                      {"test_per_class", s.test_per_class},
                      {"cluster_std", s.cluster_std},
                      {"cluster_separation", s.cluster_separation},
                      {"seed", s.seed}};
  }
  j["step_size"] = c.step_size;
  j["capacity"] = c.capacity;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["epochs_per_task"] = c.epochs_per_task;
  j["first_task_epochs"] = c.first_task_epochs;
  j["vote"] = {{"beta", c.vote.beta},
               {"eps_n", c.vote.eps_n},
               {"eps_r", c.vote.eps_r},
               {"beta_mode", c.vote.beta_mode == BetaMode::pilot ? "pilot" : "fixed"}};
  const AugmentConfig a = c.augment();
  j["augment"] = {{"alpha_r", a.alpha_r}, {"enabled", a.enabled}};
  j["mode"] = to_string(c.mode);
  j["freeze"] = c.freeze;
  j["replay"] = c.replay;
  j["shuffle_classes"] = c.shuffle_classes;
  j["seed"] = c.seeds.base;
  j["seeds"] = {{"data", c.seeds.data_seed()},
                {"init", c.seeds.init_seed()},
                {"augment", c.seeds.augment_seed()},
                {"class_order", c.seeds.class_order_seed()}};
  j["eval_threads"] = c.eval_threads;
  j["out"] = c.out_dir;
  j["svg"] = c.write_svg;
  return j;
}

}  // namespace cvote
