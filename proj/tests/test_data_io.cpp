#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "protocorrect/dataset.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace protocorrect;
namespace fs = std::filesystem;

namespace {

EmbeddingDataset tiny() {
  EmbeddingDataset ds;
  ds.dim = 2;
  ds.classes = {{0, "cat"}, {1, "dog"}};
  ds.embeddings.resize(2, 2);
  ds.embeddings << 1.0f, 0.0f, 0.0f, 1.0f;
  ds.records = {{"a", ds.classes[0], Split::Train, std::string("img/a.png")}, {"b", ds.classes[1], Split::Test, {}}};
  return ds;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

ErrorKind read_kind(const fs::path& base) {
  try {
    read_embeddings(base);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::IoError;
}

bool bitwise_equal(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  if (a.embeddings.rows() != b.embeddings.rows() || a.embeddings.cols() != b.embeddings.cols()) return false;
  return std::memcmp(a.embeddings.data(), b.embeddings.data(), sizeof(float) * static_cast<std::size_t>(a.embeddings.size())) == 0;
}

}  // namespace

TEST_CASE("pemb layout") {
  test_support::TempDir dir;
  write_embeddings(tiny(), dir / "tiny");
  const auto bytes = slurp(dir / "tiny.pemb");
  REQUIRE(bytes.size() == 32);
  CHECK(bytes.substr(0, 4) == "PEMB");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 2);
  CHECK(bytes[12] == 2);
  float f = 0;
  std::memcpy(&f, bytes.data() + 16, 4);
  CHECK(f == 1.0f);
  const auto meta = slurp(dir / "tiny.meta.jsonl");
  CHECK(meta == "{\"id\":\"a\",\"label\":\"cat\",\"label_id\":0,\"split\":\"train\",\"image\":\"img/a.png\"}\n"
                "{\"id\":\"b\",\"label\":\"dog\",\"label_id\":1,\"split\":\"test\"}\n");
}

TEST_CASE("round trip reproduces records bitwise") {
  test_support::TempDir dir;
  const auto ds = tiny();
  write_embeddings(ds, dir / "tiny");
  const auto back = read_embeddings(dir / "tiny");
  CHECK(bitwise_equal(ds, back));
  CHECK(back.records[0].id == "a");
  CHECK(back.records[0].image == std::optional<std::string>("img/a.png"));
  CHECK_FALSE(back.records[1].image);
  CHECK(back.records[1].split == Split::Test);
  CHECK(back.classes == ds.classes);
  CHECK_FALSE(back.rescaled_on_ingest);
}

TEST_CASE("randomized round trips") {
  test_support::TempDir dir;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticConfig cfg;
    cfg.classes = 2 + static_cast<int>(seed % 5);
    cfg.dim = 1 + static_cast<int>(seed * 7 % 40);
    cfg.per_class_train = 3;
    cfg.per_class_val = static_cast<int>(seed % 2);
    cfg.per_class_test = 4;
    cfg.min_mean_separation = cfg.dim == 1 ? 0.0 : 0.1;
    cfg.seed = seed;
    const auto ds = generate_synthetic(cfg).data;
    const auto base = dir / ("r" + std::to_string(seed));
    write_embeddings(ds, base);
    const auto back = read_embeddings(base);
    CHECK(bitwise_equal(ds, back));
    CHECK_FALSE(back.rescaled_on_ingest);
    REQUIRE(back.records.size() == ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      CHECK(back.records[i].id == ds.records[i].id);
      CHECK(back.records[i].label == ds.records[i].label);
      CHECK(back.records[i].split == ds.records[i].split);
    }
  }
}

TEST_CASE("reader normalizes off-unit rows and flags it") {
  test_support::TempDir dir;
  auto ds = tiny();
  ds.embeddings.row(0) << 3.0f, 4.0f;
  write_embeddings(ds, dir / "x");
  const auto back = read_embeddings(dir / "x");
  CHECK(back.rescaled_on_ingest);
  CHECK(back.embeddings(0, 0) == doctest::Approx(0.6));
  CHECK(back.embeddings(0, 1) == doctest::Approx(0.8));
  CHECK(back.embeddings(1, 1) == 1.0f);

  ds.embeddings.row(0) << 0.0f, 0.0f;
  write_embeddings(ds, dir / "z");
  CHECK(read_kind(dir / "z") == ErrorKind::ZeroVector);
}

TEST_CASE("malformed files are rejected") {
  test_support::TempDir dir;
  write_embeddings(tiny(), dir / "good");
  const auto bytes = slurp(dir / "good.pemb");
  const auto meta = slurp(dir / "good.meta.jsonl");

  auto variant = [&](const std::string& name, std::string b, const std::string& m) {
    spit(dir / (name + ".pemb"), b);
    spit(dir / (name + ".meta.jsonl"), m);
    return read_kind(dir / name);
  };

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK(variant("magic", bad, meta) == ErrorKind::FormatError);
  bad = bytes;
  bad[4] = 2;
  CHECK(variant("version", bad, meta) == ErrorKind::FormatError);
  bad = bytes;
  bad[8] = 3;
  CHECK(variant("count", bad, meta) == ErrorKind::FormatError);
  CHECK(variant("truncated", bytes.substr(0, 28), meta) == ErrorKind::FormatError);
  CHECK(variant("short", bytes.substr(0, 10), meta) == ErrorKind::FormatError);
  CHECK(variant("trailing", bytes + "xxxx", meta) == ErrorKind::FormatError);
  bad = bytes;
  bad[12] = 0;
  CHECK(variant("dim0", bad, meta) == ErrorKind::FormatError);
  CHECK(variant("metalines", bytes, meta.substr(0, meta.find('\n') + 1)) == ErrorKind::FormatError);
  CHECK(variant("metajson", bytes, "{nope}\n{}\n") == ErrorKind::FormatError);
  CHECK(variant("split", bytes,
                "{\"id\":\"a\",\"label\":\"cat\",\"label_id\":0,\"split\":\"holdout\"}\n"
                "{\"id\":\"b\",\"label\":\"dog\",\"label_id\":1,\"split\":\"test\"}\n") == ErrorKind::FormatError);
  CHECK(variant("names", bytes,
                "{\"id\":\"a\",\"label\":\"cat\",\"label_id\":0,\"split\":\"train\"}\n"
                "{\"id\":\"b\",\"label\":\"dog\",\"label_id\":0,\"split\":\"test\"}\n") == ErrorKind::FormatError);
  CHECK(read_kind(dir / "missing") == ErrorKind::IoError);
}

TEST_CASE("synthetic generator") {
  SyntheticConfig cfg;
  cfg.classes = 4;
  cfg.dim = 16;
  cfg.per_class_train = 5;
  cfg.per_class_val = 2;
  cfg.per_class_test = 3;
  cfg.seed = 3;
  const auto a = generate_synthetic(cfg);
  const auto b = generate_synthetic(cfg);
  CHECK(a.data.embeddings == b.data.embeddings);
  CHECK(a.data.size() == 40);
  CHECK(a.data.subset(Split::Train).size() == 20);
  CHECK(a.data.subset(Split::Val).size() == 8);
  CHECK(a.data.subset(Split::Test).size() == 12);
  CHECK(a.data.records.front().id == "train-000000");
  CHECK(a.data.classes[3].name == "class_03");
  for (Eigen::Index i = 0; i < a.data.embeddings.rows(); ++i) {
    CHECK(std::abs(a.data.embeddings.row(i).cast<double>().norm() - 1.0) < 1e-6);
  }
  for (int x = 0; x < 4; ++x) {
    for (int y = x + 1; y < 4; ++y) CHECK(cosine_distance(a.class_means.row(x), a.class_means.row(y)) > cfg.min_mean_separation);
  }
  cfg.seed = 4;
  CHECK(generate_synthetic(cfg).data.embeddings != a.data.embeddings);

  SyntheticConfig bad = cfg;
  bad.sigma = 0;
  CHECK_THROWS_AS(generate_synthetic(bad), Error);
  bad = cfg;
  bad.classes = 1;
  CHECK_THROWS_AS(generate_synthetic(bad), Error);
}

TEST_CASE("store document") {
  SUBCASE("empty store round trip") {
    PrototypeStore s(3, {5, true});
    const auto back = store_from_json(store_to_json(s));
    CHECK(back.dim() == 3);
    CHECK(back.empty());
    CHECK(back.config().budget == 5u);
    CHECK(back.config().protect_server);
    CHECK(store_to_json(back) == store_to_json(s));
  }
  SUBCASE("300-entry store round trip keeps every field and prediction") {
    std::mt19937_64 rng(77);
    PrototypeStore s(16);
    for (int i = 0; i < 300; ++i) {
      s.insert({i % 12, "c" + std::to_string(i % 12)}, normalize(oracle::random_vector(rng, 16)),
               i % 3 == 0 ? Source::User : Source::Server);
      if (i % 5 == 0) s.nearest(oracle::random_vector(rng, 16));
    }
    const auto text = store_to_json(s);
    const auto back = store_from_json(text);
    CHECK(store_to_json(back) == text);
    REQUIRE(back.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto& x = s.entries()[i];
      const auto& y = back.entries()[i];
      CHECK(x.proto_id == y.proto_id);
      CHECK(x.label == y.label);
      CHECK(x.source == y.source);
      CHECK(x.created_seq == y.created_seq);
      CHECK(x.last_used_seq == y.last_used_seq);
      CHECK(x.vector == y.vector);
    }
    CHECK(back.clock() == s.clock());
    CHECK(back.next_proto_id() == s.next_proto_id());
    for (int q = 0; q < 100; ++q) {
      const auto query = oracle::random_vector(rng, 16);
      CHECK(back.peek_nearest(query).proto_id == s.peek_nearest(query).proto_id);
    }
  }
  SUBCASE("file round trip") {
    test_support::TempDir dir;
    PrototypeStore s(2);
    s.insert({0, "a"}, Embedding{{0.1, 0.7}}, Source::Server);
    export_store(s, dir / "store.json");
    CHECK(store_to_json(import_store(dir / "store.json")) == store_to_json(s));
  }
  SUBCASE("malformed documents") {
    PrototypeStore s(2);
    s.insert({0, "a"}, Embedding{{1.0, 0.0}}, Source::Server);
    const auto good = store_to_json(s);
    auto kind = [](const std::string& text) {
      try {
        store_from_json(text);
      } catch (const Error& e) {
        return e.kind();
      }
      return ErrorKind::IoError;
    };
    auto patched = [&](const std::string& from, const std::string& to) {
      std::string t = good;
      const auto pos = t.find(from);
      REQUIRE(pos != std::string::npos);
      return t.replace(pos, from.size(), to);
    };
    CHECK(kind("not json") == ErrorKind::FormatError);
    CHECK(kind("{}") == ErrorKind::FormatError);
    CHECK(kind(patched("\"version\": 1", "\"version\": 9")) == ErrorKind::FormatError);
    CHECK(kind(patched("\"server\"", "\"robot\"")) == ErrorKind::FormatError);
    CHECK(kind(patched("\"budget\": null", "\"budget\": 0")) == ErrorKind::FormatError);
    CHECK(kind(patched("\"dim\": 2", "\"dim\": 3")) == ErrorKind::DimensionMismatch);
  }
}
