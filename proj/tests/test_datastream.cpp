#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>
#include <set>

#include "cvote/datastream.hpp"

using namespace cvote;

namespace {

std::vector<std::uint8_t> minimal_cveb() {
  // "CVEB", v1, D=2, R=1, label 0, [1.5, -2.0]
  std::vector<std::uint8_t> b{'C', 'V', 'E', 'B', 1, 2, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0};
  auto put = [&](float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  };
  put(1.5f);
  put(-2.0f);
  return b;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::numeric;
}

std::string message_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("CVEB and CSV load the same hand-built record") {
  const auto a = parse_cveb(minimal_cveb());
  REQUIRE(a.records.size() == 1);
  CHECK(a.dim == 2);
  CHECK(a.records[0].label == 0);
  CHECK(a.records[0].feature == Vec32{1.5f, -2.0f});

  const auto b = parse_csv("label,f0,f1\n0,1.5,-2.0\n");
  CHECK(a == b);
}

TEST_CASE("CVEB parse errors") {
  auto bytes = minimal_cveb();
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK(message_of([&] { parse_cveb(bytes); }).find("byte offset 0") != std::string::npos);
  }
  SUBCASE("bad version") {
    bytes[4] = 2;
    CHECK(message_of([&] { parse_cveb(bytes); }).find("byte offset 4") != std::string::npos);
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    CHECK(message_of([&] { parse_cveb(bytes); }).find("trailing") != std::string::npos);
  }
  SUBCASE("truncated") {
    bytes.pop_back();
    CHECK(kind_of([&] { parse_cveb(bytes); }) == ErrorKind::data);
  }
  SUBCASE("non-finite value names its offset") {
    const float inf = std::numeric_limits<float>::infinity();
    std::memcpy(bytes.data() + 21, &inf, 4);
    CHECK(message_of([&] { parse_cveb(bytes); }).find("byte offset 21") != std::string::npos);
  }
}

TEST_CASE("label gaps are rejected") {
  CHECK(message_of([] { parse_csv("label,f0\n0,1\n2,3\n"); }).find("labels not dense") != std::string::npos);
  EmbeddingSet gap{1, {{{1.f}, 0}, {{2.f}, 2}}};
  CHECK(message_of([&] { parse_cveb(encode_cveb(gap)); }).find("labels not dense") != std::string::npos);
}

TEST_CASE("CSV parse errors name the line") {
  CHECK(message_of([] { parse_csv("label,f0,f1\n0,1,2\n0,1\n"); }).find("line 3") != std::string::npos);
  CHECK(message_of([] { parse_csv("label,f0\n0,abc\n"); }).find("line 2") != std::string::npos);
  CHECK(message_of([] { parse_csv("label,f0\n0,nan\n"); }).find("non-finite") != std::string::npos);
  CHECK(message_of([] { parse_csv("lbl,f0\n0,1\n"); }).find("header") != std::string::npos);
  CHECK(kind_of([] { parse_csv(""); }) == ErrorKind::data);
}

TEST_CASE("CVEB -> CSV -> CVEB round-trip is value-exact") {
  RngStream rng(17);
  EmbeddingSet set;
  set.dim = 5;
  for (std::uint32_t i = 0; i < 200; ++i) {
    EmbeddingRecord r;
    r.label = i % 4;
    for (int j = 0; j < 5; ++j) {
      // Spread across magnitudes, including subnormal-adjacent and large values.
      const double mag = std::pow(10.0, static_cast<double>(rng.uniform_index(20)) - 10.0);
      r.feature.push_back(static_cast<float>(rng.gaussian() * mag));
    }
    set.records.push_back(r);
  }
  const auto csv = encode_csv(parse_cveb(encode_cveb(set)));
  const auto back = encode_cveb(parse_csv(csv));
  CHECK(back == encode_cveb(set));
}

TEST_CASE("files on disk round-trip and the format follows the extension") {
  const auto dir = std::filesystem::temp_directory_path() / "cvote_ds_test";
  std::filesystem::create_directories(dir);
  const auto ds = generate_synthetic({1, 2, 3, 4, 2, 1.0, 5.0, 9});
  save_embeddings(ds.train, dir / "t.cveb", EmbeddingFormat::cveb);
  save_embeddings(ds.train, dir / "t.csv", EmbeddingFormat::csv);
  CHECK(format_from_path(dir / "t.CSV") == EmbeddingFormat::csv);
  CHECK(load_embeddings(dir / "t.cveb") == ds.train);
  CHECK(load_embeddings(dir / "t.csv") == ds.train);
  CHECK(kind_of([&] { load_embeddings(dir / "missing.cveb"); }) == ErrorKind::data);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset validation") {
  EmbeddingDataset ds;
  ds.train = {1, {{{0.f}, 0}, {{1.f}, 1}}};
  ds.test = {1, {{{0.f}, 0}}};
  CHECK(kind_of([&] { ds.validate(); }) == ErrorKind::data);
  ds.test.records.push_back({{1.f}, 1});
  CHECK_NOTHROW(ds.validate());
  ds.test.dim = 2;
  CHECK(kind_of([&] { ds.validate(); }) == ErrorKind::data);
}

TEST_CASE("make_task_split") {
  auto s = make_task_split(4, 2);
  CHECK(s.tasks == std::vector<std::vector<ClassIndex>>{{0, 1}, {2, 3}});
  s = make_task_split(5, 2);
  CHECK(s.tasks == std::vector<std::vector<ClassIndex>>{{0, 1}, {2, 3}, {4}});
  CHECK(make_task_split(10, 3, 42).tasks == make_task_split(10, 3, 42).tasks);
  CHECK(kind_of([] { make_task_split(4, 0); }) == ErrorKind::config);
  CHECK(kind_of([] { make_task_split(4, -1); }) == ErrorKind::config);

  SUBCASE("shuffled splits stay disjoint and exhaustive") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto split = make_task_split(23, 4, seed);
      auto all = split.order();
      std::sort(all.begin(), all.end());
      for (ClassIndex c = 0; c < 23; ++c) CHECK(all[c] == c);
      CHECK(split.num_tasks() == 6);
      CHECK(split.tasks.back().size() == 3);
    }
  }
  CHECK(s.task_of(4) == 2);
  CHECK(s.classes_through(1) == 4);
}

TEST_CASE("stream_task batches and permutation property") {
  EmbeddingSet train;
  train.dim = 1;
  for (int i = 0; i < 40; ++i) train.records.push_back({{static_cast<float>(i)}, static_cast<ClassIndex>(i % 4)});
  // Task 0 = classes {0,1}: 20 records; add 5 more to reach 25.
  for (int i = 0; i < 5; ++i) train.records.push_back({{100.f + i}, 0});
  const auto split = make_task_split(4, 2);

  const auto batches = stream_task(train, split, 0, 1, 10);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].records.size() == 10);
  CHECK(batches[1].records.size() == 10);
  CHECK(batches[2].records.size() == 5);

  auto multiset = [](const std::vector<StreamBatch>& bs) {
    std::multimap<float, ClassIndex> m;
    for (const auto& b : bs) {
      for (const auto& r : b.records) m.emplace(r.feature[0], r.label);
    }
    return m;
  };
  std::multimap<float, ClassIndex> expected;
  for (const auto& r : train.records) {
    if (r.label < 2) expected.emplace(r.feature[0], r.label);
  }
  CHECK(multiset(batches) == expected);
  for (const auto& b : batches) {
    CHECK(b.task_index == 0);
    for (const auto& r : b.records) CHECK(r.label < 2);
  }

  const auto other = stream_task(train, split, 0, 2, 10);
  CHECK(multiset(other) == expected);
  CHECK(other[0].records != batches[0].records);
  CHECK(stream_task(train, split, 0, 1, 10)[0].records == batches[0].records);
  CHECK_THROWS_AS(stream_task(train, split, 2, 1, 10), Error);
}

TEST_CASE("streams over all tasks present every training record exactly once") {
  const auto ds = generate_synthetic({4, 3, 6, 17, 1, 1.0, 4.0, 3});
  const auto split = make_task_split(ds.num_classes(), 3, 5);
  std::multiset<std::vector<float>> seen;
  for (std::size_t k = 0; k < split.num_tasks(); ++k) {
    for (const auto& b : stream_task(ds.train, split, k, 100 + k, 10)) {
      for (const auto& r : b.records) seen.insert(r.feature);
    }
  }
  std::multiset<std::vector<float>> all;
  for (const auto& r : ds.train.records) all.insert(r.feature);
  CHECK(seen == all);
}

TEST_CASE("generate_synthetic") {
  SUBCASE("separation 10 is separable by nearest class mean") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto ds = generate_synthetic({1, 2, 16, 100, 2000, 1.0, 10.0, seed});
      std::vector<Vec64> means(2, Vec64(16, 0.0));
      for (const auto& r : ds.train.records) {
        for (int j = 0; j < 16; ++j) means[r.label][j] += r.feature[j] / 100.0;
      }
      std::size_t ok = 0;
      for (const auto& r : ds.test.records) {
        const auto pred = euclidean_distance(r.feature, means[0]) <= euclidean_distance(r.feature, means[1]) ? 0u : 1u;
        ok += pred == r.label;
      }
      CHECK(static_cast<double>(ok) / ds.test.records.size() >= 0.999);
    }
  }
  SUBCASE("separation 0 is indistinguishable") {
    const auto ds = generate_synthetic({1, 2, 16, 500, 2000, 1.0, 0.0, 3});
    std::vector<Vec64> means(2, Vec64(16, 0.0));
    for (const auto& r : ds.train.records) {
      for (int j = 0; j < 16; ++j) means[r.label][j] += r.feature[j] / 500.0;
    }
    std::size_t ok = 0;
    for (const auto& r : ds.test.records) {
      const auto pred = euclidean_distance(r.feature, means[0]) <= euclidean_distance(r.feature, means[1]) ? 0u : 1u;
      ok += pred == r.label;
    }
    CHECK(static_cast<double>(ok) / ds.test.records.size() == doctest::Approx(0.5).epsilon(0.1));
  }
  SUBCASE("fixed seed is bitwise reproducible") {
    const SynthConfig cfg{3, 2, 8, 10, 5, 1.5, 3.0, 77};
    const auto a = generate_synthetic(cfg), b = generate_synthetic(cfg);
    CHECK(encode_cveb(a.train) == encode_cveb(b.train));
    CHECK(encode_cveb(a.test) == encode_cveb(b.test));
  }
  SUBCASE("class means are equidistant at separation * std") {
    const auto ds = generate_synthetic({3, 2, 12, 4000, 1, 2.0, 3.0, 8});
    std::vector<Vec64> means(6, Vec64(12, 0.0));
    for (const auto& r : ds.train.records) {
      for (int j = 0; j < 12; ++j) means[r.label][j] += r.feature[j] / 4000.0;
    }
    for (int a = 0; a < 6; ++a) {
      for (int b = a + 1; b < 6; ++b) {
        double d = 0.0;
        for (int j = 0; j < 12; ++j) d += (means[a][j] - means[b][j]) * (means[a][j] - means[b][j]);
        CHECK(std::sqrt(d) == doctest::Approx(6.0).epsilon(0.05));
      }
    }
  }
  SUBCASE("invalid config") {
    CHECK(kind_of([] { generate_synthetic({0, 2, 4, 1, 1, 1.0, 1.0, 0}); }) == ErrorKind::config);
    CHECK(kind_of([] { generate_synthetic({1, 2, 4, 1, 1, 0.0, 1.0, 0}); }) == ErrorKind::config);
  }
}
