#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cvote/exemplar_store.hpp"
#include "oracles.hpp"

using namespace cvote;

namespace {

EmbeddingRecord rec(std::initializer_list<float> f, ClassIndex label) { return {Vec32(f), label}; }

std::vector<Vec32> features_of(const ExemplarSet& set, ClassIndex label) {
  std::vector<Vec32> out;
  for (const auto& ex : set.find(label)->items) out.push_back(ex.feature);
  return out;
}

}  // namespace

TEST_CASE("online_mean_update") {
  Vec64 mean;
  auto n = online_mean_update(mean, 0, Vec32{2.f, -4.f});
  CHECK(n == 1);
  CHECK(mean == Vec64{2.0, -4.0});
  n = online_mean_update(mean, n, Vec32{4.f, 0.f});
  CHECK(mean == Vec64{3.0, -2.0});

  Vec64 m;
  std::uint64_t k = 0;
  std::vector<std::vector<float>> hist;
  for (float v : {1.f, 3.f, 5.f}) {
    k = online_mean_update(m, k, Vec32{v});
    hist.push_back({v});
  }
  CHECK(m[0] == doctest::Approx(3.0));
  CHECK(m[0] == doctest::Approx(oracle::batch_mean(hist)[0]));
}

TEST_CASE("online sampler hand trace: q=2, stream 0, 10, 1") {
  ExemplarSet set(2, 1);
  set.observe(rec({0.f}, 0), 0);
  CHECK(set.find(0)->mean[0] == 0.0);
  CHECK(features_of(set, 0) == std::vector<Vec32>{{0.f}});
  set.observe(rec({10.f}, 0), 0);
  set.observe(rec({1.f}, 0), 0);
  const ClassStore* s = set.find(0);
  CHECK(s->mean[0] == doctest::Approx(11.0 / 3.0));
  CHECK(s->seen == 3);
  CHECK(features_of(set, 0) == std::vector<Vec32>{{0.f}, {1.f}});

  SUBCASE("continuing with rebalance keeps the exemplar closest to the mean") {
    set.rebalance(2);
    CHECK(set.quota() == 1);
    CHECK(features_of(set, 0) == std::vector<Vec32>{{1.f}});
    CHECK(set.find(0)->mean[0] == doctest::Approx(11.0 / 3.0));
    CHECK(set.find(0)->seen == 3);
  }
}

TEST_CASE("sampler tie keeps the stored exemplar") {
  ExemplarSet set(1, 1);
  set.observe(rec({0.f}, 0), 0);
  set.observe(rec({0.f}, 0), 0);
  CHECK(set.find(0)->items.size() == 1);
  CHECK(set.find(0)->seen == 2);

  SUBCASE("the candidate is discarded, not swapped in") {
    // Stored [-1], candidate [1]: mean 0, both at distance 1.
    ExemplarSet t(1, 1);
    t.observe(rec({-1.f}, 0), 0);
    t.observe(rec({1.f}, 0), 0);
    CHECK(features_of(t, 0) == std::vector<Vec32>{{-1.f}});
  }
}

TEST_CASE("sampler matches the step-by-step oracle on random streams") {
  RngStream rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t q = 1 + rng.uniform_index(5);
    const std::uint32_t dim = 1 + static_cast<std::uint32_t>(rng.uniform_index(4));
    ExemplarSet set(static_cast<std::uint32_t>(q), dim);
    oracle::SamplerOracle ref{q, {}, {}};
    const int n = 5 + static_cast<int>(rng.uniform_index(60));
    for (int i = 0; i < n; ++i) {
      Vec32 f(dim);
      // Coarse grid so that ties actually happen.
      for (auto& x : f) x = static_cast<float>(static_cast<int>(rng.uniform_index(7)) - 3);
      set.observe({f, 0}, 0);
      ref.observe(f);
      REQUIRE(features_of(set, 0) == ref.store);
    }
  }
}

TEST_CASE("store invariants: |items| = min(q, n), exact means, isolation") {
  RngStream rng(8);
  ExemplarSet set(24, 3);
  set.rebalance(4);
  std::vector<std::vector<std::vector<float>>> hist(4);
  for (int i = 0; i < 400; ++i) {
    const auto label = static_cast<ClassIndex>(rng.uniform_index(4));
    Vec32 f(3);
    for (auto& x : f) x = static_cast<float>(rng.gaussian() * 5 + label);
    const auto before = set.stores();
    set.observe({f, label}, label / 2);
    hist[label].push_back(f);
    for (const auto& [l, s] : set.stores()) {
      CHECK(s.items.size() == std::min<std::size_t>(set.quota(), s.seen));
      if (l != label && before.contains(l)) CHECK(s.items == before.at(l).items);
    }
    CHECK(set.total_stored() <= set.capacity());
  }
  for (ClassIndex c = 0; c < 4; ++c) {
    const auto ref = oracle::batch_mean(hist[c]);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(set.find(c)->mean[j] - ref[j]) <= 1e-5 * std::max(1.0, std::abs(ref[j])));
  }
}

TEST_CASE("new classes shrink the quota as they arrive") {
  ExemplarSet set(6, 1);
  for (float v : {0.f, 1.f, 2.f, 3.f, 4.f, 5.f}) set.observe(rec({v}, 0), 0);
  CHECK(set.find(0)->items.size() == 6);
  set.observe(rec({9.f}, 1), 1);
  CHECK(set.quota() == 3);
  CHECK(set.find(0)->items.size() == 3);
  CHECK(set.total_stored() == 4);
}

TEST_CASE("rebalance") {
  SUBCASE("Q=4: two classes at q=2 shrink to q=1 for four classes") {
    ExemplarSet set(4, 1);
    for (float v : {0.f, 4.f, 1.f}) set.observe(rec({v}, 0), 0);
    for (float v : {10.f, 20.f, 14.f}) set.observe(rec({v}, 1), 0);
    CHECK(set.quota() == 2);
    set.rebalance(4);
    CHECK(set.quota() == 1);
    // Class 0 mean 5/3 keeps 1; class 1 mean 44/3 keeps 14.
    CHECK(features_of(set, 0) == std::vector<Vec32>{{1.f}});
    CHECK(features_of(set, 1) == std::vector<Vec32>{{14.f}});
  }
  SUBCASE("nothing over quota leaves the set unchanged") {
    ExemplarSet set(10, 1);
    set.observe(rec({1.f}, 0), 0);
    set.observe(rec({2.f}, 1), 0);
    const auto before = set.stores();
    set.rebalance(3);
    CHECK(set.find(0)->items == before.at(0).items);
    CHECK(set.find(1)->items == before.at(1).items);
  }
  SUBCASE("capacity too small") {
    ExemplarSet set(2, 1);
    try {
      set.rebalance(3);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
    }
    set.observe(rec({1.f}, 0), 0);
    set.observe(rec({1.f}, 1), 0);
    CHECK_THROWS_AS(set.observe(rec({1.f}, 2), 0), Error);
  }
}

TEST_CASE("observe rejects bad input") {
  ExemplarSet set(4, 2);
  CHECK_THROWS_AS(set.observe(rec({1.f}, 0), 0), Error);
  set.observe(rec({1.f, 2.f}, 0), 0);
  CHECK_THROWS_AS(set.observe(rec({1.f, 2.f}, 0), 1), Error);
}

TEST_CASE("sample_exemplars") {
  ExemplarSet set(4, 1);
  RngStream rng(3);
  CHECK_THROWS_AS(sample_exemplars(set, 1, rng), Error);
  set.observe(rec({7.f}, 0), 0);
  for (const auto& ex : sample_exemplars(set, 3, rng)) CHECK(ex.feature == Vec32{7.f});

  set.observe(rec({9.f}, 1), 0);
  const auto draws = sample_exemplars(set, 100000, rng);
  const auto sevens = std::count_if(draws.begin(), draws.end(), [](const Exemplar& e) { return e.feature[0] == 7.f; });
  CHECK(std::abs(static_cast<double>(sevens) / 100000.0 - 0.5) < 0.01);

  RngStream a(5), b(5);
  CHECK(sample_exemplars(set, 50, a) == sample_exemplars(set, 50, b));
}

TEST_CASE("augment") {
  RngStream rng(4);
  AugmentConfig cfg;
  SUBCASE("a single exemplar has zero sigma") {
    ExemplarSet set(4, 2);
    set.observe(rec({1.f, 2.f}, 0), 0);
    CHECK(augment(set.find(0)->items[0], set, cfg, rng) == Vec32{1.f, 2.f});
  }
  SUBCASE("alpha_r = 0 is the identity") {
    ExemplarSet set(4, 2);
    set.observe(rec({1.f, 2.f}, 0), 0);
    set.observe(rec({5.f, -2.f}, 0), 0);
    cfg.alpha_r = 0.0;
    CHECK(augment(set.find(0)->items[1], set, cfg, rng) == Vec32{5.f, -2.f});
  }
  SUBCASE("per-dimension sample std, zero dimension untouched") {
    ExemplarSet set(4, 2);
    set.observe(rec({0.f, 0.f}, 0), 0);
    set.observe(rec({2.f, 0.f}, 0), 0);
    const auto sigma = class_sigma(set, 0);
    CHECK(sigma[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(sigma[1] == 0.0);
    const Exemplar ex = set.find(0)->items[0];
    bool moved = false;
    for (int i = 0; i < 20; ++i) {
      const auto out = augment(ex, set, cfg, rng);
      CHECK(out[1] == 0.f);
      moved = moved || out[0] != 0.f;
    }
    CHECK(moved);
    CHECK(set.find(0)->items[0] == ex);
  }
  SUBCASE("negative alpha is a config error") {
    ExemplarSet set(4, 1);
    set.observe(rec({1.f}, 0), 0);
    cfg.alpha_r = -1.0;
    CHECK_THROWS_AS(augment(set.find(0)->items[0], set, cfg, rng), Error);
  }
}

TEST_CASE("masks") {
  ExemplarSet set(8, 1);
  set.observe(rec({0.f}, 0), 0);
  CHECK(masks(set) == std::vector<TaskMask>{{1}});
  set.observe(rec({0.f}, 1), 0);
  set.observe(rec({0.f}, 2), 1);
  set.observe(rec({0.f}, 3), 1);
  const auto m = masks(set);
  CHECK(m == std::vector<TaskMask>{{1, 1, 0, 0}, {0, 0, 1, 1}});
  TaskMask total(4, 0);
  for (const auto& mk : m) {
    for (std::size_t i = 0; i < 4; ++i) total[i] += mk[i];
  }
  CHECK(total == TaskMask{1, 1, 1, 1});
}

TEST_CASE("storage_bytes") {
  ExemplarSet empty(10, 4);
  CHECK(storage_bytes(empty).feature_bytes == 0);

  ExemplarSet set(10, 4);
  for (ClassIndex c = 0; c < 3; ++c) set.observe({Vec32(4, 1.f), c}, 0);
  const auto r = storage_bytes(set);
  CHECK(r.feature_bytes == 48);
  CHECK(r.metadata_bytes == 24);
  CHECK(r.formula_check);

  ExemplarSet full(6, 4);
  RngStream rng(1);
  for (int i = 0; i < 30; ++i) full.observe({Vec32{float(rng.gaussian()), 0, 0, 0}, ClassIndex(i % 3)}, 0);
  CHECK(storage_bytes(full).feature_bytes == 4 * 4 * 6);
}

TEST_CASE("CVES snapshot round-trip") {
  ExemplarSet set(8, 3);
  RngStream rng(6);
  for (int i = 0; i < 40; ++i) {
    const auto c = static_cast<ClassIndex>(i % 4);
    set.observe({Vec32{float(rng.gaussian()), float(rng.gaussian()), float(c)}, c}, c / 2);
  }
  const auto bytes = encode_snapshot(set);
  CHECK(bytes.size() == 4 + 1 + 4 + 4 + set.total_stored() * (8 + 12));
  const auto back = parse_snapshot(bytes, 8);
  CHECK(encode_snapshot(back) == bytes);
  CHECK(back.num_tasks() == 2);
  for (const auto& [label, s] : set.stores()) CHECK(back.find(label)->items == s.items);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_snapshot(bad, 8), Error);
  CHECK_THROWS_AS(parse_snapshot(bytes, 2), Error);
}
