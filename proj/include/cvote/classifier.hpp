#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cvote/datastream.hpp"
#include "cvote/exemplar_store.hpp"
#include "cvote/numeric.hpp"

namespace cvote {

// One logit per seen class, accumulated in 64-bit.
using Logits = Vec64;

enum class Provenance : std::uint8_t { new_data, exemplar };

struct TrainBatch {
  std::vector<Vec32> features;
  std::vector<ClassIndex> targets;
  std::vector<Provenance> provenance;

  std::size_t size() const { return features.size(); }
  void push(Vec32 f, ClassIndex target, Provenance p);
};

// Bias-free linear layer over all classes seen so far. Row c is the weight
// vector of class c; rows of frozen classes never change once frozen.
class SingleHeadClassifier {
 public:
  SingleHeadClassifier(std::uint32_t dim, double learning_rate, std::uint64_t init_seed);

  std::uint32_t dim() const { return dim_; }
  std::uint32_t num_classes() const { return classes_; }
  double learning_rate() const { return learning_rate_; }

  std::span<const float> row(ClassIndex c) const;
  std::span<const float> weights() const { return weights_; }
  void set_row(ClassIndex c, std::span<const float> values);
  bool is_frozen(ClassIndex c) const { return frozen_.at(c) != 0; }
  std::vector<ClassIndex> frozen_classes() const;

  // Append rows drawn from N(0, 1/sqrt(D)) using the init stream.
  void expand(std::uint32_t new_class_count);

  Logits logits(std::span<const float> f) const;

  // Mean cross-entropy over the batch, then one SGD step on the unfrozen rows.
  // Returns the pre-update loss.
  double train_step(const TrainBatch& batch);

  void freeze(std::span<const ClassIndex> classes);

  std::vector<double> weight_norms() const;

  std::uint64_t steps() const { return steps_; }
  // Number of new-data samples consumed by train_step so far.
  std::uint64_t new_samples_trained() const { return new_samples_; }

 private:
  std::uint32_t dim_;
  std::uint32_t classes_ = 0;
  double learning_rate_;
  RngStream init_rng_;
  std::vector<float> weights_;  // row-major classes_ x dim_
  std::vector<std::uint8_t> frozen_;
  std::uint64_t steps_ = 0;
  std::uint64_t new_samples_ = 0;
};

// New records as-is, plus one sampled exemplar per new record (augmented when
// cfg.enabled). An empty exemplar set yields the new records only.
TrainBatch build_pair_batch(const StreamBatch& fresh, const ExemplarSet& set, const AugmentConfig& cfg,
                            RngStream& rng);
TrainBatch new_data_batch(const StreamBatch& fresh);

// CVWT checkpoint: "CVWT", version 1, u32 C, u32 D, frozen bitmap of
// ceil(C/8) bytes (bit c%8 of byte c/8), then C*D row-major f32 weights.
std::vector<std::uint8_t> encode_checkpoint(const SingleHeadClassifier& clf);
SingleHeadClassifier parse_checkpoint(const std::vector<std::uint8_t>& bytes, double learning_rate = 0.1,
                                      const std::string& source = "<memory>");
void save_checkpoint(const SingleHeadClassifier& clf, const std::filesystem::path& path);
SingleHeadClassifier load_checkpoint(const std::filesystem::path& path, double learning_rate = 0.1);

}  // namespace cvote
