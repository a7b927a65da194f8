#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "cvote/datastream.hpp"
#include "cvote/exemplar_store.hpp"
#include "cvote/voting.hpp"

namespace cvote {

struct SeedConfig {
  std::uint64_t base = 0;
  // Unset entries derive from base.
  std::optional<std::uint64_t> data;
  std::optional<std::uint64_t> init;
  std::optional<std::uint64_t> augment;
  std::optional<std::uint64_t> class_order;

  std::uint64_t data_seed() const;
  std::uint64_t init_seed() const;
  std::uint64_t augment_seed() const;
  std::uint64_t class_order_seed() const;
};

struct RunConfig {
  std::optional<std::string> train_path;
  std::optional<std::string> test_path;
  std::optional<SynthConfig> synthetic;

  std::uint32_t step_size = 2;
  std::uint32_t capacity = 200;
  std::uint32_t batch_size = 10;
  double learning_rate = 0.1;
  std::uint32_t epochs_per_task = 1;
  std::uint32_t first_task_epochs = 1;

  VoteParams vote;
  double alpha_r = 1.0;
  // Exemplar augmentation during pairing; unset means "on unless mode is baseline".
  std::optional<bool> augment_enabled;
  PredictionMode mode = PredictionMode::full;
  bool freeze = true;
  // Pair every new record with a replayed exemplar.
  bool replay = true;
  bool shuffle_classes = true;

  SeedConfig seeds;
  std::uint32_t eval_threads = 1;
  std::string out_dir;
  bool write_svg = true;

  AugmentConfig augment() const;
  // Throws ErrorKind::config on the first invalid field.
  void validate() const;
  // Exactly one of train/test files or a synthetic config.
  void validate_source() const;
  // Everything except the data source.
  void validate_params() const;
};

RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
// Resolved values (derived seeds, augmentation flag) so the echo is a complete
// provenance record that reloads to the same run.
nlohmann::json config_to_json(const RunConfig& config);

}  // namespace cvote
