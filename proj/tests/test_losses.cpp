#include "doctest.h"

#include <cmath>
#include <random>

#include "protocorrect/losses.hpp"
#include "support/oracles.hpp"

using namespace protocorrect;

namespace {

Embedding v2(double a, double b) { return Embedding{{a, b}}; }

// plain-loop cross-entropy with squared-euclidean logits
double ref_loss(const oracle::Vec& q, std::int64_t label, const std::map<std::int64_t, oracle::Vec>& protos, double t) {
  std::vector<double> logits;
  double target = 0;
  for (const auto& [c, p] : protos) {
    double d = 0;
    for (std::size_t i = 0; i < q.size(); ++i) d += (q[i] - p[i]) * (q[i] - p[i]);
    logits.push_back(-d / t);
    if (c == label) target = -d / t;
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0;
  for (double l : logits) s += std::exp(l - m);
  return m + std::log(s) - target;
}

}  // namespace

TEST_CASE("distillation_l1 examples") {
  const std::vector<Embedding> t{v2(1, 1)};
  const std::vector<Embedding> s{v2(0, 0)};
  CHECK(distillation_l1(t, t) == 0.0);
  CHECK(distillation_l1(t, s) == 2.0);
  const std::vector<Embedding> t2{v2(1, 1), v2(2, 2)};
  const std::vector<Embedding> s2{v2(0, 0), v2(0, 0)};
  CHECK(distillation_l1(t2, s2) == 3.0);
}

TEST_CASE("distillation_l1 errors") {
  const std::vector<Embedding> one{v2(1, 1)};
  const std::vector<Embedding> two{v2(1, 1), v2(1, 1)};
  const std::vector<Embedding> none;
  const std::vector<Embedding> wide{Embedding{{1.0, 1.0, 1.0}}};
  auto kind = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  CHECK(kind([&] { distillation_l1(one, two); }) == ErrorKind::LengthMismatch);
  CHECK(kind([&] { distillation_l1(none, none); }) == ErrorKind::EmptyInput);
  CHECK(kind([&] { distillation_l1(one, wide); }) == ErrorKind::DimensionMismatch);
}

TEST_CASE("distillation_l1 is non-negative and zero only on identical batches") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    std::vector<Embedding> a, b;
    for (int i = 0; i < 4; ++i) {
      a.push_back(oracle::random_vector(rng, 6));
      b.push_back(oracle::random_vector(rng, 6));
    }
    CHECK(distillation_l1(a, b) > 0.0);
    CHECK(distillation_l1(a, a) == 0.0);
  }
}

TEST_CASE("protonet_loss examples") {
  const PrototypeMap two{{0, v2(1, 0)}, {1, v2(-1, 0)}};
  const std::vector<LabeledQuery> mid{{v2(0, 5), 0}};
  CHECK(std::abs(protonet_loss(mid, two) - std::log(2.0)) <= 1e-9);

  const PrototypeMap far{{0, v2(0, 0)}, {1, v2(10, 0)}};
  const std::vector<LabeledQuery> at{{v2(0, 0), 0}};
  const double l = protonet_loss(at, far);
  CHECK(l >= 0.0);
  CHECK(l < 1e-40);

  // squared distances {0, 1, 1}: -ln(1 / (1 + 2/e)) = 0.5514447139...
  const PrototypeMap three{{0, v2(0, 0)}, {1, v2(1, 0)}, {2, v2(0, 1)}};
  const std::vector<LabeledQuery> q3{{v2(0, 0), 0}};
  CHECK(protonet_loss(q3, three) == doctest::Approx(0.5514447139320511).epsilon(1e-12));
  CHECK(protonet_loss(q3, three) == doctest::Approx(std::log1p(2.0 * std::exp(-1.0))).epsilon(1e-14));
}

TEST_CASE("protonet_loss errors") {
  const PrototypeMap two{{0, v2(1, 0)}, {1, v2(-1, 0)}};
  const PrototypeMap one{{0, v2(1, 0)}};
  const std::vector<LabeledQuery> q{{v2(0, 1), 0}};
  const std::vector<LabeledQuery> unknown{{v2(0, 1), 9}};
  const std::vector<LabeledQuery> wide{{Embedding{{0.0, 1.0, 0.0}}, 0}};
  const std::vector<LabeledQuery> none;
  CHECK_THROWS_AS(protonet_loss(q, one), Error);
  CHECK_THROWS_AS(protonet_loss(none, two), Error);
  try {
    protonet_loss(unknown, two);
    FAIL("expected UnknownClass");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownClass);
  }
  try {
    protonet_loss(wide, two);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("protonet_loss agrees with a plain-loop reference and is monotone") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    PrototypeMap protos;
    std::map<std::int64_t, oracle::Vec> ref;
    for (int c = 0; c < 4; ++c) {
      protos[c] = oracle::random_vector(rng, 5);
      ref[c] = oracle::to_vec(protos[c]);
    }
    const Embedding q = oracle::random_vector(rng, 5);
    const std::vector<LabeledQuery> batch{{q, 2}};
    const double temp = 0.5 + (t % 4);
    const double got = protonet_loss(batch, protos, {ProtoMetric::SquaredEuclidean, temp});
    CHECK(got == doctest::Approx(ref_loss(oracle::to_vec(q), 2, ref, temp)).epsilon(1e-12));

    // move the true prototype halfway toward the query
    PrototypeMap closer = protos;
    closer[2] = 0.5 * (protos[2] + q);
    CHECK(protonet_loss(batch, closer, {ProtoMetric::SquaredEuclidean, temp}) < got);
  }
}

TEST_CASE("cosine metric variant") {
  const PrototypeMap two{{0, v2(1, 0)}, {1, v2(0, 1)}};
  const std::vector<LabeledQuery> diag{{v2(1, 1), 1}};
  CHECK(protonet_loss(diag, two, {ProtoMetric::Cosine, 1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  const std::vector<LabeledQuery> on{{v2(3, 0), 0}};
  // logits 0 and -1
  CHECK(protonet_loss(on, two, {ProtoMetric::Cosine, 1.0}) == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("analytic query gradient matches central differences") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    PrototypeMap protos;
    for (int c = 0; c < 3 + t % 4; ++c) protos[c] = oracle::random_vector(rng, 8);
    const Embedding q = oracle::random_vector(rng, 8);
    const ClassId y = t % 3;
    const ProtoNetConfig cfg{ProtoMetric::SquaredEuclidean, 1.0 + (t % 3)};
    const auto f = [&](const oracle::Vec& x) {
      const std::vector<LabeledQuery> b{{Embedding(Eigen::Map<const Embedding>(x.data(), static_cast<Eigen::Index>(x.size()))), y}};
      return protonet_loss(b, protos, cfg);
    };
    const auto num = oracle::finite_difference(f, oracle::to_vec(q), 1e-5);
    const Embedding g = protonet_query_gradient(q, y, protos, cfg);
    double diff = 0, scale = 0;
    for (int i = 0; i < 8; ++i) {
      diff += (g[i] - num[static_cast<std::size_t>(i)]) * (g[i] - num[static_cast<std::size_t>(i)]);
      scale += num[static_cast<std::size_t>(i)] * num[static_cast<std::size_t>(i)];
    }
    CHECK(std::sqrt(diff) <= 1e-4 * std::max(std::sqrt(scale), 1e-8));
  }
}
