#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "cvote/numeric.hpp"

namespace cvote {

using ClassIndex = std::uint32_t;
using TaskIndex = std::uint32_t;

struct EmbeddingRecord {
  Vec32 feature;
  ClassIndex label = 0;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

// One file's worth of records (train or test).
struct EmbeddingSet {
  std::uint32_t dim = 0;
  std::vector<EmbeddingRecord> records;

  // max label + 1; 0 when empty.
  std::uint32_t num_classes() const;
  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;
};

struct EmbeddingDataset {
  EmbeddingSet train;
  EmbeddingSet test;

  std::uint32_t dim() const { return train.dim; }
  std::uint32_t num_classes() const { return train.num_classes(); }
  // Shared dim; every class has at least one train and one test record.
  void validate() const;
};

enum class EmbeddingFormat { cveb, csv };

// ".csv" selects csv, anything else cveb.
EmbeddingFormat format_from_path(const std::filesystem::path& path);

// Labels must be dense (0..max with no gaps); record order is preserved.
EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
EmbeddingSet load_embeddings(const std::filesystem::path& path);
EmbeddingSet parse_cveb(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");
EmbeddingSet parse_csv(const std::string& text, const std::string& source = "<memory>");

std::vector<std::uint8_t> encode_cveb(const EmbeddingSet& set);
std::string encode_csv(const EmbeddingSet& set);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path, EmbeddingFormat format);

// Ordered, disjoint class sets. A num_classes that is not a multiple of
// step_size leaves the remainder in a final, smaller task.
struct TaskSplit {
  std::vector<std::vector<ClassIndex>> tasks;
  std::uint32_t step_size = 0;

  std::size_t num_tasks() const { return tasks.size(); }
  std::uint32_t num_classes() const;
  // Classes of tasks 0..k inclusive.
  std::uint32_t classes_through(std::size_t k) const;
  // Concatenation of all task class lists.
  std::vector<ClassIndex> order() const;
  TaskIndex task_of(ClassIndex label) const;
};

// Classes are shuffled by class_order_seed (identity order when absent),
// then chunked into tasks of step_size.
TaskSplit make_task_split(std::uint32_t num_classes, std::int64_t step_size,
                          std::optional<std::uint64_t> class_order_seed = std::nullopt);

struct StreamBatch {
  std::vector<EmbeddingRecord> records;
  TaskIndex task_index = 0;
};

// Every train record of task k's classes, exactly once, shuffled by seed and
// chunked into batches of batch_size (the last one may be short).
std::vector<StreamBatch> stream_task(const EmbeddingSet& train, const TaskSplit& split, std::size_t k,
                                     std::uint64_t seed, std::size_t batch_size);

struct SynthConfig {
  std::uint32_t num_tasks = 10;
  std::uint32_t classes_per_task = 2;
  std::uint32_t dim = 32;
  std::uint32_t train_per_class = 200;
  std::uint32_t test_per_class = 50;
  double cluster_std = 1.0;
  // Distance between class means in units of cluster_std.
  double cluster_separation = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Class c ~ N(mu_c, std^2 I). When the class count fits in dim the means sit on
// seeded random orthonormal directions scaled so that every pair of means is
// exactly separation*std apart; otherwise the directions are random unit
// vectors and the spacing holds only approximately.
EmbeddingDataset generate_synthetic(const SynthConfig& config);

}  // namespace cvote
