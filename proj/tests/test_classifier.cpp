#include "doctest.h"

#include <algorithm>
#include <map>
#include <random>

#include "protocorrect/classifier.hpp"
#include "support/oracles.hpp"

using namespace protocorrect;

namespace {

Embedding v2(double a, double b) { return Embedding{{a, b}}; }

PrototypeStore random_store(std::mt19937_64& rng, int n, int classes, int dim) {
  PrototypeStore s(dim);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  for (int i = 0; i < n; ++i) {
    const int c = cls(rng);
    s.insert({c, "c" + std::to_string(c)}, oracle::random_vector(rng, dim), Source::Server);
  }
  return s;
}

}  // namespace

TEST_CASE("predict examples") {
  PrototypeStore s(2);
  s.insert({0, "A"}, v2(1, 0), Source::Server);
  s.insert({1, "B"}, v2(0, 1), Source::Server);
  const auto p = predict(s, v2(1, 0.1));
  CHECK(p.label.name == "A");
  CHECK(p.distance == doctest::Approx(1.0 - 1.0 / std::sqrt(1.01)).epsilon(1e-12));
  CHECK(p.distance == doctest::Approx(0.00496).epsilon(1e-3));
  REQUIRE(p.alternatives.size() == 1);
  CHECK(p.alternatives[0] == ClassDistance{p.label, p.distance});

  s.insert({1, "B"}, v2(0.3, -0.7), Source::User);
  const auto q = predict(s, v2(0.3, -0.7));
  CHECK(q.label.name == "B");
  CHECK(q.distance == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("predict errors") {
  PrototypeStore empty(2);
  CHECK_THROWS_AS(predict(empty, v2(1, 0)), Error);
  PrototypeStore s(2);
  s.insert({0, "A"}, v2(1, 0), Source::Server);
  CHECK_THROWS_AS(predict(s, v2(0, 0)), Error);
  CHECK_THROWS_AS(predict_topk(s, v2(1, 0), 0), Error);
}

TEST_CASE("predict matches exhaustive scan on random stores") {
  std::mt19937_64 rng(21);
  auto s = random_store(rng, 500, 20, 12);
  for (int q = 0; q < 1000; ++q) {
    const auto query = oracle::random_vector(rng, 12);
    const auto want = oracle::brute_force_nearest(s, oracle::to_vec(query));
    const auto got = predict(s, query);
    CHECK(got.proto_id == want.proto_id);
    CHECK(got.label.id == want.class_id);
  }
}

TEST_CASE("predict_topk") {
  PrototypeStore s(2);
  s.insert({0, "A"}, v2(1, 0), Source::Server);
  s.insert({1, "B"}, v2(0, 1), Source::Server);
  s.insert({2, "C"}, v2(-1, 0), Source::Server);
  CHECK(predict_topk(s, v2(1, 0.2), 5).alternatives.size() == 3);
  const auto one = predict_topk(s, v2(1, 0.2), 1);
  REQUIRE(one.alternatives.size() == 1);
  CHECK(one.alternatives[0] == ClassDistance{one.label, one.distance});

  std::mt19937_64 rng(8);
  auto big = random_store(rng, 200, 20, 6);
  for (int q = 0; q < 100; ++q) {
    const auto query = oracle::random_vector(rng, 6);
    // oracle: per-class minimum, sorted by (distance, class id)
    std::map<std::int64_t, double> best;
    for (const auto& e : big.entries()) {
      const double d = oracle::cosine_distance(oracle::to_vec(query), oracle::to_vec(e.vector));
      auto [it, fresh] = best.try_emplace(e.label.id, d);
      if (!fresh) it->second = std::min(it->second, d);
    }
    std::vector<std::pair<double, std::int64_t>> order;
    for (auto [c, d] : best) order.emplace_back(d, c);
    std::sort(order.begin(), order.end());

    const auto clock_before = big.clock();
    const auto p = predict_topk(big, query, 7);
    CHECK(big.clock() == clock_before + 1);
    REQUIRE(p.alternatives.size() == 7);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(p.alternatives[i].label.id == order[i].second);
      CHECK(p.alternatives[i].distance == doctest::Approx(order[i].first).epsilon(1e-12));
    }
    CHECK(p.alternatives[0].label == p.label);
  }
}

TEST_CASE("predict_readonly leaves the store untouched and agrees with predict") {
  std::mt19937_64 rng(4);
  auto s = random_store(rng, 50, 5, 8);
  for (int q = 0; q < 50; ++q) {
    const auto query = oracle::random_vector(rng, 8);
    const auto clock = s.clock();
    const auto ro = predict_readonly(s, query, 3);
    CHECK(s.clock() == clock);
    const auto rw = predict_topk(s, query, 3);
    CHECK(ro.proto_id == rw.proto_id);
    CHECK(ro.alternatives == rw.alternatives);
  }
}

TEST_CASE("scale invariance and forced self-match") {
  std::mt19937_64 rng(17);
  auto s = random_store(rng, 100, 10, 8);
  for (int q = 0; q < 100; ++q) {
    const auto query = oracle::random_vector(rng, 8);
    const auto a = predict_readonly(s, query);
    const auto b = predict_readonly(s, 37.5 * query);
    CHECK(a.proto_id == b.proto_id);
    CHECK(a.label == b.label);
  }
  const auto query = oracle::random_vector(rng, 8);
  s.insert({42, "new"}, query, Source::User);
  CHECK(predict(s, query).label.id == 42);
}
