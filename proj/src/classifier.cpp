#include "cvote/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"

namespace cvote {

void TrainBatch::push(Vec32 f, ClassIndex target, Provenance p) {
  features.push_back(std::move(f));
  targets.push_back(target);
  provenance.push_back(p);
}

SingleHeadClassifier::SingleHeadClassifier(std::uint32_t dim, double learning_rate, std::uint64_t init_seed)
    : dim_(dim), learning_rate_(learning_rate), init_rng_(init_seed) {
  if (dim == 0) fail(ErrorKind::config, "classifier: dim must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail(ErrorKind::config, "learning rate must be > 0");
}

std::span<const float> SingleHeadClassifier::row(ClassIndex c) const {
  if (c >= classes_) fail(ErrorKind::numeric, "classifier row out of range");
  return std::span<const float>(weights_).subspan(static_cast<std::size_t>(c) * dim_, dim_);
}

void SingleHeadClassifier::set_row(ClassIndex c, std::span<const float> values) {
  if (c >= classes_) fail(ErrorKind::numeric, "classifier row out of range");
  check_same_dim(values.size(), dim_, "set_row");
  std::copy(values.begin(), values.end(), weights_.begin() + static_cast<std::ptrdiff_t>(c) * dim_);
}

std::vector<ClassIndex> SingleHeadClassifier::frozen_classes() const {
  std::vector<ClassIndex> out;
  for (ClassIndex c = 0; c < classes_; ++c) {
    if (frozen_[c]) out.push_back(c);
  }
  return out;
}

void SingleHeadClassifier::expand(std::uint32_t new_class_count) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  weights_.reserve(weights_.size() + static_cast<std::size_t>(new_class_count) * dim_);
  for (std::size_t i = 0; i < static_cast<std::size_t>(new_class_count) * dim_; ++i) {
    weights_.push_back(static_cast<float>(scale * init_rng_.gaussian()));
  }
  frozen_.resize(frozen_.size() + new_class_count, 0);
  classes_ += new_class_count;
}

Logits SingleHeadClassifier::logits(std::span<const float> f) const {
  check_same_dim(f.size(), dim_, "logits");
  Logits out(classes_);
  for (ClassIndex c = 0; c < classes_; ++c) out[c] = dot(row(c), f);
  return out;
}

double SingleHeadClassifier::train_step(const TrainBatch& batch) {
  if (batch.size() == 0) fail(ErrorKind::numeric, "train_step: empty batch");
  if (batch.targets.size() != batch.size() || batch.provenance.size() != batch.size()) {
    fail(ErrorKind::numeric, "train_step: ragged batch");
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    check_same_dim(batch.features[i].size(), dim_, "train_step");
    if (batch.targets[i] >= classes_) {
      fail(ErrorKind::numeric, "train_step: target " + std::to_string(batch.targets[i]) + " >= class count " +
                                   std::to_string(classes_));
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> grad(weights_.size(), 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& f = batch.features[i];
    const auto x = softmax_xent_grad(logits(f), batch.targets[i]);
    loss += x.loss;
    for (ClassIndex c = 0; c < classes_; ++c) {
      if (frozen_[c]) continue;
      const double g = x.grad[c] * inv_b;
      double* gr = grad.data() + static_cast<std::size_t>(c) * dim_;
      for (std::uint32_t d = 0; d < dim_; ++d) gr[d] += g * f[d];
    }
    if (batch.provenance[i] == Provenance::new_data) ++new_samples_;
  }
  for (ClassIndex c = 0; c < classes_; ++c) {
    if (frozen_[c]) continue;
    const std::size_t base = static_cast<std::size_t>(c) * dim_;
    for (std::uint32_t d = 0; d < dim_; ++d) {
      weights_[base + d] = static_cast<float>(weights_[base + d] - learning_rate_ * grad[base + d]);
    }
  }
  ++steps_;
  return loss * inv_b;
}

void SingleHeadClassifier::freeze(std::span<const ClassIndex> classes) {
  for (ClassIndex c : classes) {
    if (c >= classes_) fail(ErrorKind::numeric, "freeze: class " + std::to_string(c) + " does not exist");
    frozen_[c] = 1;
  }
}

std::vector<double> SingleHeadClassifier::weight_norms() const {
  std::vector<double> out(classes_);
  for (ClassIndex c = 0; c < classes_; ++c) out[c] = l2_norm(row(c));
  return out;
}

TrainBatch new_data_batch(const StreamBatch& fresh) {
  TrainBatch batch;
  for (const auto& r : fresh.records) batch.push(r.feature, r.label, Provenance::new_data);
  return batch;
}

TrainBatch build_pair_batch(const StreamBatch& fresh, const ExemplarSet& set, const AugmentConfig& cfg,
                            RngStream& rng) {
  TrainBatch batch = new_data_batch(fresh);
  if (set.empty()) return batch;
  for (const auto& ex : sample_exemplars(set, fresh.records.size(), rng)) {
    Vec32 f = cfg.enabled ? augment(ex, set, cfg, rng) : ex.feature;
    batch.push(std::move(f), ex.label, Provenance::exemplar);
  }
  return batch;
}

std::vector<std::uint8_t> encode_checkpoint(const SingleHeadClassifier& clf) {
  detail::ByteWriter out;
  out.magic("CVWT");
  out.u8(1);
  out.u32(clf.num_classes());
  out.u32(clf.dim());
  std::vector<std::uint8_t> bitmap((clf.num_classes() + 7) / 8, 0);
  for (ClassIndex c = 0; c < clf.num_classes(); ++c) {
    if (clf.is_frozen(c)) bitmap[c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
  }
  for (auto b : bitmap) out.u8(b);
  for (float w : clf.weights()) out.f32(w);
  return std::move(out.bytes());
}

SingleHeadClassifier parse_checkpoint(const std::vector<std::uint8_t>& bytes, double learning_rate,
                                      const std::string& source) {
  detail::ByteReader in(bytes, source);
  in.expect_magic("CVWT");
  const std::size_t version_at = in.offset();
  if (in.u8() != 1) in.error("unsupported version", version_at);
  const std::uint32_t classes = in.u32();
  const std::size_t dim_at = in.offset();
  const std::uint32_t dim = in.u32();
  if (dim == 0) in.error("dim must be positive", dim_at);
  std::vector<std::uint8_t> bitmap((classes + 7) / 8);
  for (auto& b : bitmap) b = in.u8();
  if (in.remaining() != static_cast<std::size_t>(classes) * dim * 4) {
    in.error("weight block size does not match C x D", in.offset());
  }
  SingleHeadClassifier clf(dim, learning_rate, 0);
  clf.expand(classes);
  Vec32 row(dim);
  for (ClassIndex c = 0; c < classes; ++c) {
    for (auto& w : row) {
      const std::size_t at = in.offset();
      w = in.f32();
      if (!std::isfinite(w)) in.error("non-finite weight", at);
    }
    clf.set_row(c, row);
  }
  in.expect_end();
  std::vector<ClassIndex> frozen;
  for (ClassIndex c = 0; c < classes; ++c) {
    if (bitmap[c / 8] & (1u << (c % 8))) frozen.push_back(c);
  }
  clf.freeze(frozen);
  return clf;
}

void save_checkpoint(const SingleHeadClassifier& clf, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(clf));
}

SingleHeadClassifier load_checkpoint(const std::filesystem::path& path, double learning_rate) {
  return parse_checkpoint(detail::read_file(path), learning_rate, path.string());
}

}  // namespace cvote
