#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "cvote/datastream.hpp"
#include "cvote/numeric.hpp"

namespace cvote {

struct Exemplar {
  Vec32 feature;
  ClassIndex label = 0;
  TaskIndex task = 0;

  friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

struct ClassStore {
  ClassIndex label = 0;
  TaskIndex task = 0;
  std::vector<Exemplar> items;  // insertion order
  Vec64 mean;                   // running mean of every observed feature
  std::uint64_t seen = 0;
};

// Running mean update: mean <- n/(n+1) mean + 1/(n+1) v. Returns n + 1.
std::uint64_t online_mean_update(Vec64& mean, std::uint64_t n, std::span<const float> v);

// Capacity-bounded exemplar memory with a per-class quota q = floor(Q / classes).
//
// The class count used for the quota is the larger of the classes seen so far
// and the count announced through rebalance(), so a caller can reserve room for
// an upcoming task before its stream starts.
class ExemplarSet {
 public:
  ExemplarSet(std::uint32_t capacity, std::uint32_t dim);

  std::uint32_t capacity() const { return capacity_; }
  std::uint32_t dim() const { return dim_; }
  std::uint32_t quota() const;
  std::size_t num_classes() const { return stores_.size(); }
  // Highest task index + 1.
  std::size_t num_tasks() const;
  std::size_t total_stored() const;
  bool empty() const { return total_stored() == 0; }

  const std::map<ClassIndex, ClassStore>& stores() const { return stores_; }
  const ClassStore* find(ClassIndex label) const;

  // One online-sampler step for a record of task `task`: update the class
  // mean, then append if the class store has room, otherwise replace the
  // exemplar farthest from the updated mean if the candidate is closer.
  // Ties keep the earlier-stored exemplar; the candidate counts as newest.
  void observe(const EmbeddingRecord& record, TaskIndex task);

  // Recompute the quota for new_total_classes and trim every over-quota store
  // by repeatedly removing the exemplar farthest from its running mean.
  void rebalance(std::uint32_t new_total_classes);

  // Exemplar by flat index in class order, then insertion order.
  const Exemplar& at(std::size_t flat_index) const;

  // Restore stored exemplars verbatim (snapshot loading). The running mean of
  // each class is reset to the mean of its stored items.
  void restore(std::vector<Exemplar> items);

 private:
  std::uint32_t quota_for(std::size_t classes) const;
  void trim_to_quota();

  std::uint32_t capacity_;
  std::uint32_t dim_;
  std::uint32_t planned_classes_ = 0;
  std::map<ClassIndex, ClassStore> stores_;
};

// count uniform draws over all stored exemplars, with replacement.
std::vector<Exemplar> sample_exemplars(const ExemplarSet& set, std::size_t count, RngStream& rng);

struct AugmentConfig {
  double alpha_r = 1.0;
  bool enabled = true;

  void validate() const;
};

// Per-dimension sample standard deviation (n - 1 denominator) over the stored
// exemplars of a class; zeros when fewer than two are stored.
Vec64 class_sigma(const ExemplarSet& set, ClassIndex label);

// ex.feature + alpha_r * P with P ~ N(0, class_sigma). Nothing is stored.
Vec32 augment(const Exemplar& ex, const ExemplarSet& set, const AugmentConfig& cfg, RngStream& rng);

using TaskMask = std::vector<std::uint8_t>;

// One mask per learned task over the C seen classes; labels must be dense.
std::vector<TaskMask> masks(const ExemplarSet& set);

struct StorageReport {
  std::uint64_t feature_bytes = 0;
  std::uint64_t metadata_bytes = 0;  // u32 label + u32 task per exemplar
  std::uint64_t budget_bytes = 0;    // 4 * D * Q
  bool formula_check = true;         // feature_bytes <= budget_bytes
};
StorageReport storage_bytes(const ExemplarSet& set);

// CVES snapshot: "CVES", version 1, u32 dim, u32 count, then
// [u32 label][u32 task][dim x f32] per exemplar.
std::vector<std::uint8_t> encode_snapshot(const ExemplarSet& set);
ExemplarSet parse_snapshot(const std::vector<std::uint8_t>& bytes, std::uint32_t capacity,
                           const std::string& source = "<memory>");
void save_snapshot(const ExemplarSet& set, const std::filesystem::path& path);
ExemplarSet load_snapshot(const std::filesystem::path& path, std::uint32_t capacity);

}  // namespace cvote
