#include "cvote/exemplar_store.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"

namespace cvote {

std::uint64_t online_mean_update(Vec64& mean, std::uint64_t n, std::span<const float> v) {
  if (n == 0) {
    mean.assign(v.begin(), v.end());
    return 1;
  }
  check_same_dim(mean.size(), v.size(), "online_mean_update");
  const double keep = static_cast<double>(n) / static_cast<double>(n + 1);
  const double take = 1.0 / static_cast<double>(n + 1);
  for (std::size_t i = 0; i < mean.size(); ++i) mean[i] = keep * mean[i] + take * static_cast<double>(v[i]);
  return n + 1;
}

ExemplarSet::ExemplarSet(std::uint32_t capacity, std::uint32_t dim) : capacity_(capacity), dim_(dim) {
  if (dim == 0) fail(ErrorKind::config, "exemplar set: dim must be positive");
}

std::uint32_t ExemplarSet::quota_for(std::size_t classes) const {
  const std::size_t n = std::max<std::size_t>({classes, planned_classes_, 1});
  return static_cast<std::uint32_t>(capacity_ / n);
}

std::uint32_t ExemplarSet::quota() const { return quota_for(stores_.size()); }

std::size_t ExemplarSet::num_tasks() const {
  std::size_t n = 0;
  for (const auto& [label, s] : stores_) n = std::max<std::size_t>(n, s.task + 1);
  return n;
}

std::size_t ExemplarSet::total_stored() const {
  std::size_t n = 0;
  for (const auto& [label, s] : stores_) n += s.items.size();
  return n;
}

const ClassStore* ExemplarSet::find(ClassIndex label) const {
  auto it = stores_.find(label);
  return it == stores_.end() ? nullptr : &it->second;
}

namespace {

// d >= ref, counting values a few ulps apart as equal. Online and batch means
// round differently, so exact ties would otherwise depend on update order.
bool at_least(double d, double ref) { return d >= ref - 1e-12 * (1.0 + std::abs(ref)); }

}  // namespace

void ExemplarSet::observe(const EmbeddingRecord& record, TaskIndex task) {
  check_same_dim(record.feature.size(), dim_, "observe");
  check_finite(record.feature, "observe");

  auto it = stores_.find(record.label);
  if (it == stores_.end()) {
    if (quota_for(stores_.size() + 1) == 0) {
      fail(ErrorKind::config, "exemplar capacity " + std::to_string(capacity_) + " too small for " +
                                  std::to_string(stores_.size() + 1) + " classes");
    }
    ClassStore fresh;
    fresh.label = record.label;
    fresh.task = task;
    it = stores_.emplace(record.label, std::move(fresh)).first;
    trim_to_quota();
  } else if (it->second.task != task) {
    fail(ErrorKind::data, "class " + std::to_string(record.label) + " observed under a second task");
  }

  ClassStore& store = it->second;
  store.seen = online_mean_update(store.mean, store.seen, record.feature);

  if (store.items.size() < quota()) {
    store.items.push_back({record.feature, record.label, task});
    return;
  }
  // Candidate is scanned last and `>=` picks the last maximum, so ties evict
  // the newest entry (the candidate itself when it ties).
  std::size_t worst = store.items.size();
  double worst_d = -1.0;
  for (std::size_t j = 0; j < store.items.size(); ++j) {
    const double d = squared_distance(store.items[j].feature, store.mean);
    if (at_least(d, worst_d)) {
      worst_d = std::max(worst_d, d);
      worst = j;
    }
  }
  if (at_least(squared_distance(record.feature, store.mean), worst_d)) return;
  store.items.erase(store.items.begin() + static_cast<std::ptrdiff_t>(worst));
  store.items.push_back({record.feature, record.label, task});
}

void ExemplarSet::trim_to_quota() {
  const std::uint32_t q = quota();
  for (auto& [label, store] : stores_) {
    while (store.items.size() > q) {
      std::size_t worst = 0;
      double worst_d = -1.0;
      for (std::size_t j = 0; j < store.items.size(); ++j) {
        const double d = squared_distance(store.items[j].feature, store.mean);
        if (at_least(d, worst_d)) {
          worst_d = std::max(worst_d, d);
          worst = j;
        }
      }
      store.items.erase(store.items.begin() + static_cast<std::ptrdiff_t>(worst));
    }
  }
}

void ExemplarSet::rebalance(std::uint32_t new_total_classes) {
  if (new_total_classes < stores_.size()) fail(ErrorKind::config, "rebalance: class count cannot shrink");
  if (quota_for(new_total_classes) == 0) {
    fail(ErrorKind::config, "exemplar capacity " + std::to_string(capacity_) + " too small for " +
                                std::to_string(new_total_classes) + " classes");
  }
  planned_classes_ = std::max(planned_classes_, new_total_classes);
  trim_to_quota();
}

const Exemplar& ExemplarSet::at(std::size_t flat_index) const {
  for (const auto& [label, s] : stores_) {
    if (flat_index < s.items.size()) return s.items[flat_index];
    flat_index -= s.items.size();
  }
  fail(ErrorKind::numeric, "exemplar index out of range");
}

void ExemplarSet::restore(std::vector<Exemplar> items) {
  stores_.clear();
  for (auto& ex : items) {
    check_same_dim(ex.feature.size(), dim_, "restore");
    auto [it, inserted] = stores_.try_emplace(ex.label);
    ClassStore& s = it->second;
    if (inserted) {
      s.label = ex.label;
      s.task = ex.task;
    } else if (s.task != ex.task) {
      fail(ErrorKind::data, "class " + std::to_string(ex.label) + " stored under two tasks");
    }
    s.seen = online_mean_update(s.mean, s.seen, ex.feature);
    s.items.push_back(std::move(ex));
  }
  if (total_stored() > capacity_) fail(ErrorKind::config, "snapshot holds more exemplars than the capacity");
}

std::vector<Exemplar> sample_exemplars(const ExemplarSet& set, std::size_t count, RngStream& rng) {
  const std::size_t total = set.total_stored();
  if (total == 0) fail(ErrorKind::data, "sample_exemplars: exemplar set is empty");
  std::vector<Exemplar> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(set.at(rng.uniform_index(total)));
  return out;
}

void AugmentConfig::validate() const {
  if (!(alpha_r >= 0.0) || !std::isfinite(alpha_r)) fail(ErrorKind::config, "alpha_r must be >= 0");
}

Vec64 class_sigma(const ExemplarSet& set, ClassIndex label) {
  Vec64 sigma(set.dim(), 0.0);
  const ClassStore* s = set.find(label);
  if (s == nullptr || s->items.size() < 2) return sigma;
  const double n = static_cast<double>(s->items.size());
  Vec64 mean(set.dim(), 0.0);
  for (const auto& ex : s->items) {
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += ex.feature[j];
  }
  for (auto& m : mean) m /= n;
  for (const auto& ex : s->items) {
    for (std::size_t j = 0; j < mean.size(); ++j) {
      const double d = ex.feature[j] - mean[j];
      sigma[j] += d * d;
    }
  }
  for (auto& v : sigma) v = std::sqrt(v / (n - 1.0));
  return sigma;
}

Vec32 augment(const Exemplar& ex, const ExemplarSet& set, const AugmentConfig& cfg, RngStream& rng) {
  cfg.validate();
  check_same_dim(ex.feature.size(), set.dim(), "augment");
  const Vec32 noise = gaussian_sample(rng, class_sigma(set, ex.label));
  Vec32 out(ex.feature.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = static_cast<float>(static_cast<double>(ex.feature[j]) + cfg.alpha_r * static_cast<double>(noise[j]));
  }
  return out;
}

std::vector<TaskMask> masks(const ExemplarSet& set) {
  const std::size_t classes = set.num_classes();
  const std::size_t tasks = set.num_tasks();
  std::vector<TaskMask> out(tasks, TaskMask(classes, 0));
  for (const auto& [label, s] : set.stores()) {
    if (label >= classes) fail(ErrorKind::data, "masks: class labels are not dense");
    out[s.task][label] = 1;
  }
  for (std::size_t k = 0; k < tasks; ++k) {
    if (std::find(out[k].begin(), out[k].end(), 1) == out[k].end()) {
      fail(ErrorKind::data, "masks: task " + std::to_string(k) + " has no classes");
    }
  }
  return out;
}

StorageReport storage_bytes(const ExemplarSet& set) {
  StorageReport r;
  const std::uint64_t n = set.total_stored();
  r.feature_bytes = 4ULL * set.dim() * n;
  r.metadata_bytes = 8ULL * n;
  r.budget_bytes = 4ULL * set.dim() * set.capacity();
  r.formula_check = r.feature_bytes <= r.budget_bytes;
  return r;
}

std::vector<std::uint8_t> encode_snapshot(const ExemplarSet& set) {
  detail::ByteWriter out;
  out.magic("CVES");
  out.u8(1);
  out.u32(set.dim());
  out.u32(static_cast<std::uint32_t>(set.total_stored()));
  for (const auto& [label, s] : set.stores()) {
    for (const auto& ex : s.items) {
      out.u32(ex.label);
      out.u32(ex.task);
      for (float x : ex.feature) out.f32(x);
    }
  }
  return std::move(out.bytes());
}

ExemplarSet parse_snapshot(const std::vector<std::uint8_t>& bytes, std::uint32_t capacity, const std::string& source) {
  detail::ByteReader in(bytes, source);
  in.expect_magic("CVES");
  const std::size_t version_at = in.offset();
  if (in.u8() != 1) in.error("unsupported version", version_at);
  const std::size_t dim_at = in.offset();
  const std::uint32_t dim = in.u32();
  if (dim == 0) in.error("dim must be positive", dim_at);
  const std::uint32_t count = in.u32();
  if (in.remaining() / (8 + 4 * static_cast<std::size_t>(dim)) < count) {
    in.error("record count exceeds file size", in.offset());
  }
  std::vector<Exemplar> items(count);
  for (auto& ex : items) {
    ex.label = in.u32();
    ex.task = in.u32();
    ex.feature.resize(dim);
    for (auto& x : ex.feature) {
      const std::size_t at = in.offset();
      x = in.f32();
      if (!std::isfinite(x)) in.error("non-finite feature value", at);
    }
  }
  in.expect_end();
  ExemplarSet set(capacity == 0 ? std::max<std::uint32_t>(count, 1) : capacity, dim);
  set.restore(std::move(items));
  return set;
}

void save_snapshot(const ExemplarSet& set, const std::filesystem::path& path) {
  detail::write_file(path, encode_snapshot(set));
}

ExemplarSet load_snapshot(const std::filesystem::path& path, std::uint32_t capacity) {
  return parse_snapshot(detail::read_file(path), capacity, path.string());
}

}  // namespace cvote
