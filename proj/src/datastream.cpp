#include "cvote/datastream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "binary_io.hpp"

namespace cvote {

namespace {

constexpr std::uint8_t kCvebVersion = 1;

void check_dense_labels(const EmbeddingSet& set, const std::string& source) {
  if (set.records.empty()) return;
  std::set<ClassIndex> labels;
  for (const auto& r : set.records) labels.insert(r.label);
  if (*labels.rbegin() + 1 != labels.size()) fail(ErrorKind::data, source + ": labels not dense");
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::uint32_t EmbeddingSet::num_classes() const {
  std::uint32_t n = 0;
  for (const auto& r : records) n = std::max(n, r.label + 1);
  return n;
}

void EmbeddingDataset::validate() const {
  if (train.dim != test.dim) {
    fail(ErrorKind::data, "train/test dim mismatch (" + std::to_string(train.dim) + " vs " +
                              std::to_string(test.dim) + ")");
  }
  const std::uint32_t c = std::max(train.num_classes(), test.num_classes());
  std::vector<std::uint32_t> tr(c, 0), te(c, 0);
  for (const auto& r : train.records) ++tr[r.label];
  for (const auto& r : test.records) ++te[r.label];
  for (std::uint32_t i = 0; i < c; ++i) {
    if (tr[i] == 0 || te[i] == 0) {
      fail(ErrorKind::data, "class " + std::to_string(i) + " lacks train or test records");
    }
  }
}

EmbeddingFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".csv" ? EmbeddingFormat::csv : EmbeddingFormat::cveb;
}

EmbeddingSet parse_cveb(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  detail::ByteReader in(bytes, source);
  in.expect_magic("CVEB");
  const std::size_t version_at = in.offset();
  if (in.u8() != kCvebVersion) in.error("unsupported version", version_at);
  EmbeddingSet set;
  const std::size_t dim_at = in.offset();
  set.dim = in.u32();
  if (set.dim == 0) in.error("dim must be positive", dim_at);
  const std::uint32_t count = in.u32();
  const std::size_t record_bytes = 4 + 4 * static_cast<std::size_t>(set.dim);
  if (in.remaining() / record_bytes < count) in.error("record count exceeds file size", in.offset());
  set.records.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    EmbeddingRecord rec;
    rec.label = in.u32();
    rec.feature.resize(set.dim);
    for (auto& x : rec.feature) {
      const std::size_t at = in.offset();
      x = in.f32();
      if (!std::isfinite(x)) in.error("non-finite feature value", at);
    }
    set.records.push_back(std::move(rec));
  }
  in.expect_end();
  check_dense_labels(set, source);
  return set;
}

EmbeddingSet parse_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto error = [&](const std::string& msg) {
    fail(ErrorKind::data, source + ": " + msg + " on line " + std::to_string(line_no));
  };

  EmbeddingSet set;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    auto fields = split_fields(view);
    if (!have_header) {
      if (fields.size() < 2 || trim(fields[0]) != "label") error("bad header, expected label,f0,...");
      for (std::size_t j = 1; j < fields.size(); ++j) {
        if (trim(fields[j]) != "f" + std::to_string(j - 1)) error("bad header column '" + std::string(fields[j]) + "'");
      }
      set.dim = static_cast<std::uint32_t>(fields.size() - 1);
      have_header = true;
      continue;
    }
    if (fields.size() != set.dim + 1) {
      error("dim mismatch: expected " + std::to_string(set.dim + 1) + " fields, got " + std::to_string(fields.size()));
    }
    EmbeddingRecord rec;
    auto lab = trim(fields[0]);
    auto [lp, lec] = std::from_chars(lab.data(), lab.data() + lab.size(), rec.label);
    if (lec != std::errc() || lp != lab.data() + lab.size()) error("bad label '" + std::string(lab) + "'");
    rec.feature.resize(set.dim);
    for (std::uint32_t j = 0; j < set.dim; ++j) {
      auto f = trim(fields[j + 1]);
      auto [fp, fec] = std::from_chars(f.data(), f.data() + f.size(), rec.feature[j]);
      if (fec != std::errc() || fp != f.data() + f.size()) error("bad float '" + std::string(f) + "'");
      if (!std::isfinite(rec.feature[j])) error("non-finite feature value");
    }
    set.records.push_back(std::move(rec));
  }
  if (!have_header) fail(ErrorKind::data, source + ": missing header");
  check_dense_labels(set, source);
  return set;
}

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  auto bytes = detail::read_file(path);
  if (format == EmbeddingFormat::csv) return parse_csv(std::string(bytes.begin(), bytes.end()), path.string());
  return parse_cveb(bytes, path.string());
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) { return load_embeddings(path, format_from_path(path)); }

std::vector<std::uint8_t> encode_cveb(const EmbeddingSet& set) {
  detail::ByteWriter out;
  out.magic("CVEB");
  out.u8(kCvebVersion);
  out.u32(set.dim);
  out.u32(static_cast<std::uint32_t>(set.records.size()));
  for (const auto& r : set.records) {
    check_same_dim(r.feature.size(), set.dim, "encode_cveb");
    out.u32(r.label);
    for (float x : r.feature) out.f32(x);
  }
  return std::move(out.bytes());
}

std::string encode_csv(const EmbeddingSet& set) {
  std::string s = "label";
  for (std::uint32_t j = 0; j < set.dim; ++j) s += ",f" + std::to_string(j);
  s += '\n';
  char buf[64];
  for (const auto& r : set.records) {
    check_same_dim(r.feature.size(), set.dim, "encode_csv");
    s += std::to_string(r.label);
    for (float x : r.feature) {
      // Shortest representation that parses back to the same float.
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
      s += ',';
      s.append(buf, end);
    }
    s += '\n';
  }
  return s;
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path, EmbeddingFormat format) {
  if (format == EmbeddingFormat::csv) {
    detail::write_text(path, encode_csv(set));
  } else {
    detail::write_file(path, encode_cveb(set));
  }
}

std::uint32_t TaskSplit::num_classes() const {
  std::uint32_t n = 0;
  for (const auto& t : tasks) n += static_cast<std::uint32_t>(t.size());
  return n;
}

std::uint32_t TaskSplit::classes_through(std::size_t k) const {
  std::uint32_t n = 0;
  for (std::size_t i = 0; i <= k && i < tasks.size(); ++i) n += static_cast<std::uint32_t>(tasks[i].size());
  return n;
}

std::vector<ClassIndex> TaskSplit::order() const {
  std::vector<ClassIndex> out;
  for (const auto& t : tasks) out.insert(out.end(), t.begin(), t.end());
  return out;
}

TaskIndex TaskSplit::task_of(ClassIndex label) const {
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (std::find(tasks[k].begin(), tasks[k].end(), label) != tasks[k].end()) return static_cast<TaskIndex>(k);
  }
  fail(ErrorKind::data, "class " + std::to_string(label) + " is not in the task split");
}

TaskSplit make_task_split(std::uint32_t num_classes, std::int64_t step_size,
                          std::optional<std::uint64_t> class_order_seed) {
  if (step_size <= 0) fail(ErrorKind::config, "step_size must be positive");
  std::vector<ClassIndex> classes(num_classes);
  std::iota(classes.begin(), classes.end(), 0u);
  if (class_order_seed) {
    RngStream rng(*class_order_seed);
    rng.shuffle(classes);
  }
  TaskSplit split;
  split.step_size = static_cast<std::uint32_t>(step_size);
  for (std::size_t i = 0; i < classes.size(); i += split.step_size) {
    const std::size_t end = std::min(classes.size(), i + split.step_size);
    split.tasks.emplace_back(classes.begin() + static_cast<std::ptrdiff_t>(i),
                             classes.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return split;
}

std::vector<StreamBatch> stream_task(const EmbeddingSet& train, const TaskSplit& split, std::size_t k,
                                     std::uint64_t seed, std::size_t batch_size) {
  if (k >= split.num_tasks()) fail(ErrorKind::config, "stream_task: task index out of range");
  if (batch_size == 0) fail(ErrorKind::config, "stream_task: batch_size must be positive");
  const auto& classes = split.tasks[k];
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < train.records.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), train.records[i].label) != classes.end()) picked.push_back(i);
  }
  RngStream rng(seed);
  rng.shuffle(picked);

  std::vector<StreamBatch> batches;
  for (std::size_t i = 0; i < picked.size(); i += batch_size) {
    StreamBatch b;
    b.task_index = static_cast<TaskIndex>(k);
    for (std::size_t j = i; j < std::min(picked.size(), i + batch_size); ++j) b.records.push_back(train.records[picked[j]]);
    batches.push_back(std::move(b));
  }
  return batches;
}

void SynthConfig::validate() const {
  if (num_tasks < 1 || classes_per_task < 1 || dim < 1 || train_per_class < 1 || test_per_class < 1) {
    fail(ErrorKind::config, "synthetic config: all counts must be >= 1");
  }
  if (!(cluster_std > 0.0)) fail(ErrorKind::config, "synthetic config: cluster_std must be > 0");
  if (!(cluster_separation >= 0.0)) fail(ErrorKind::config, "synthetic config: cluster_separation must be >= 0");
}

EmbeddingDataset generate_synthetic(const SynthConfig& config) {
  config.validate();
  const std::uint32_t classes = config.num_tasks * config.classes_per_task;
  const std::uint32_t dim = config.dim;
  RngStream placement = RngStream::derive(config.seed, 1);
  RngStream draws = RngStream::derive(config.seed, 2);

  std::vector<Vec64> dirs;
  dirs.reserve(classes);
  for (std::uint32_t c = 0; c < classes; ++c) {
    Vec64 u(dim);
    for (auto& x : u) x = placement.gaussian();
    if (c < dim) {
      // Gram-Schmidt against earlier directions (twice for stability).
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& prev : dirs) {
          double proj = 0.0;
          for (std::uint32_t j = 0; j < dim; ++j) proj += u[j] * prev[j];
          for (std::uint32_t j = 0; j < dim; ++j) u[j] -= proj * prev[j];
        }
      }
    }
    double norm = 0.0;
    for (double x : u) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : u) x /= norm;
    dirs.push_back(std::move(u));
  }

  // Orthonormal u_a, u_b: |r u_a - r u_b| = r sqrt(2).
  const double radius = config.cluster_separation * config.cluster_std / std::sqrt(2.0);
  EmbeddingDataset ds;
  ds.train.dim = ds.test.dim = dim;
  auto draw = [&](std::uint32_t c) {
    EmbeddingRecord rec;
    rec.label = c;
    rec.feature.resize(dim);
    for (std::uint32_t j = 0; j < dim; ++j) {
      rec.feature[j] = static_cast<float>(radius * dirs[c][j] + config.cluster_std * draws.gaussian());
    }
    return rec;
  };
  for (std::uint32_t c = 0; c < classes; ++c) {
    for (std::uint32_t i = 0; i < config.train_per_class; ++i) ds.train.records.push_back(draw(c));
    for (std::uint32_t i = 0; i < config.test_per_class; ++i) ds.test.records.push_back(draw(c));
  }
  return ds;
}

}  // namespace cvote
