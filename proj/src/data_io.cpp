#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "protocorrect/dataset.hpp"

namespace protocorrect {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::array<char, 4> kMagic{'P', 'E', 'M', 'B'};
constexpr std::uint32_t kPembVersion = 1;
constexpr int kStoreVersion = 1;
constexpr double kUnitTolerance = 1e-6;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void put(std::ostream& os, T v) {
  v = to_little(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error(ErrorKind::FormatError, "truncated .pemb file");
  return to_little(v);
}

std::filesystem::path with_suffix(const std::filesystem::path& base, const char* suffix) {
  return std::filesystem::path(base.string() + suffix);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

}  // namespace

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "val") return Split::Val;
  if (text == "test") return Split::Test;
  throw Error(ErrorKind::FormatError, "unknown split '" + std::string(text) + "'");
}

EmbeddingDataset EmbeddingDataset::subset(Split split) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) rows.push_back(i);
  }
  return subset(rows);
}

EmbeddingDataset EmbeddingDataset::subset(const std::vector<std::size_t>& rows) const {
  EmbeddingDataset out;
  out.dim = dim;
  out.classes = classes;
  out.rescaled_on_ingest = rescaled_on_ingest;
  out.embeddings.resize(static_cast<Eigen::Index>(rows.size()), dim);
  out.records.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.embeddings.row(static_cast<Eigen::Index>(r)) = embeddings.row(static_cast<Eigen::Index>(rows[r]));
    out.records.push_back(records[rows[r]]);
  }
  return out;
}

void EmbeddingDataset::validate() const {
  if (dim < 1) throw Error(ErrorKind::FormatError, "dataset dim must be >= 1");
  if (embeddings.rows() != static_cast<Eigen::Index>(records.size()) || embeddings.cols() != dim) {
    throw Error(ErrorKind::FormatError, "embedding matrix shape does not match records");
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].id != static_cast<ClassId>(c)) {
      throw Error(ErrorKind::FormatError, "class ids must be contiguous 0..C-1");
    }
  }
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) throw Error(ErrorKind::FormatError, "duplicate record id '" + r.id + "'");
    if (r.label.id < 0 || r.label.id >= static_cast<ClassId>(classes.size()) ||
        classes[static_cast<std::size_t>(r.label.id)].name != r.label.name) {
      throw Error(ErrorKind::FormatError, "record '" + r.id + "' has a label outside the class list");
    }
  }
  if (!embeddings.allFinite()) throw Error(ErrorKind::FormatError, "embeddings contain NaN or Inf");
}

// ---------------------------------------------------------------------------
// .pemb + .meta.jsonl

void write_embeddings(const EmbeddingDataset& dataset, const std::filesystem::path& base) {
  dataset.validate();
  const auto pemb = with_suffix(base, ".pemb");
  std::ofstream out(pemb, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + pemb.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kPembVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.dim));
  for (Eigen::Index i = 0; i < dataset.embeddings.rows(); ++i) {
    for (Eigen::Index j = 0; j < dataset.dim; ++j) put<float>(out, dataset.embeddings(i, j));
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + pemb.string());

  std::string meta;
  for (const auto& r : dataset.records) {
    ordered_json line;
    line["id"] = r.id;
    line["label"] = r.label.name;
    line["label_id"] = r.label.id;
    line["split"] = std::string(to_string(r.split));
    if (r.image) line["image"] = *r.image;
    meta += line.dump();
    meta += '\n';
  }
  write_text(with_suffix(base, ".meta.jsonl"), meta);
}

EmbeddingDataset read_embeddings(const std::filesystem::path& base) {
  const auto pemb = with_suffix(base, ".pemb");
  std::ifstream in(pemb, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + pemb.string());

  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(ErrorKind::FormatError, "bad magic in " + pemb.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kPembVersion) throw Error(ErrorKind::FormatError, "unsupported .pemb version " + std::to_string(version));
  const auto count = get<std::uint32_t>(in);
  const auto dim = get<std::uint32_t>(in);
  if (dim < 1) throw Error(ErrorKind::FormatError, "dim must be >= 1");

  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t expected = 16 + std::uint64_t{count} * dim * sizeof(float);
  if (file_size != expected) {
    throw Error(ErrorKind::FormatError, "payload size " + std::to_string(file_size) + " != header-implied " +
                                            std::to_string(expected));
  }
  in.seekg(16);

  EmbeddingDataset ds;
  ds.dim = dim;
  ds.embeddings.resize(count, dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) ds.embeddings(i, j) = get<float>(in);
  }

  const std::string meta = read_text(with_suffix(base, ".meta.jsonl"));
  std::vector<std::string> lines;
  {
    std::istringstream ss(meta);
    std::string line;
    while (std::getline(ss, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(std::move(line));
    }
  }
  if (lines.size() != count) {
    throw Error(ErrorKind::FormatError, "metadata has " + std::to_string(lines.size()) + " lines, header says " +
                                            std::to_string(count));
  }

  std::map<ClassId, std::string> names;
  ds.records.reserve(count);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Record r;
    try {
      const auto j = nlohmann::json::parse(lines[i]);
      r.id = j.at("id").get<std::string>();
      r.label.name = j.at("label").get<std::string>();
      r.label.id = j.at("label_id").get<ClassId>();
      r.split = parse_split(j.at("split").get<std::string>());
      if (j.contains("image") && !j["image"].is_null()) r.image = j["image"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::FormatError, "metadata line " + std::to_string(i + 1) + ": " + e.what());
    }
    auto [it, fresh] = names.try_emplace(r.label.id, r.label.name);
    if (!fresh && it->second != r.label.name) {
      throw Error(ErrorKind::FormatError, "label_id " + std::to_string(r.label.id) + " has two names");
    }
    ds.records.push_back(std::move(r));
  }
  for (const auto& [id, name] : names) ds.classes.push_back({id, name});
  ds.validate();

  for (Eigen::Index i = 0; i < ds.embeddings.rows(); ++i) {
    const double n = ds.embeddings.row(i).cast<double>().norm();
    if (!(n > kZeroNormEpsilon)) {
      throw Error(ErrorKind::ZeroVector, "row " + std::to_string(i) + " ('" +
                                             ds.records[static_cast<std::size_t>(i)].id + "') has zero norm");
    }
    if (std::abs(n - 1.0) > kUnitTolerance) {
      ds.embeddings.row(i) = (ds.embeddings.row(i).cast<double>() / n).cast<float>();
      ds.rescaled_on_ingest = true;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// synthetic data

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.classes < 2) throw Error(ErrorKind::InvalidConfig, "classes must be >= 2");
  if (cfg.dim < 1) throw Error(ErrorKind::InvalidConfig, "dim must be >= 1");
  if (cfg.per_class_train < 1 || cfg.per_class_test < 1 || cfg.per_class_val < 0) {
    throw Error(ErrorKind::InvalidConfig, "per-class sample counts must be positive");
  }
  if (!(cfg.sigma > 0.0) || !std::isfinite(cfg.sigma)) throw Error(ErrorKind::InvalidConfig, "sigma must be > 0");
  if (!(cfg.min_mean_separation >= 0.0 && cfg.min_mean_separation < 2.0)) {
    throw Error(ErrorKind::InvalidConfig, "min_mean_separation must be in [0, 2)");
  }

  constexpr int kMaxAttempts = 1000;
  SyntheticDataset out;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::mt19937_64 rng;

  bool separated = false;
  for (int attempt = 0; attempt < kMaxAttempts && !separated; ++attempt) {
    out.effective_seed = cfg.seed + static_cast<std::uint64_t>(attempt);
    rng.seed(out.effective_seed);
    gauss.reset();
    out.class_means.resize(cfg.classes, cfg.dim);
    for (int c = 0; c < cfg.classes; ++c) {
      Embedding m(cfg.dim);
      do {
        for (auto& x : m) x = gauss(rng);
      } while (m.norm() <= kZeroNormEpsilon);
      out.class_means.row(c) = m.normalized().transpose();
    }
    separated = true;
    for (int a = 0; a < cfg.classes && separated; ++a) {
      for (int b = a + 1; b < cfg.classes; ++b) {
        if (cosine_distance(out.class_means.row(a), out.class_means.row(b)) <= cfg.min_mean_separation) {
          separated = false;
          break;
        }
      }
    }
  }
  if (!separated) {
    throw Error(ErrorKind::InvalidConfig, "could not draw class means separated by " +
                                              std::to_string(cfg.min_mean_separation));
  }

  auto& ds = out.data;
  ds.dim = cfg.dim;
  const int width = static_cast<int>(std::to_string(cfg.classes - 1).size());
  for (int c = 0; c < cfg.classes; ++c) {
    std::ostringstream name;
    name << "class_" << std::setw(std::max(width, 2)) << std::setfill('0') << c;
    ds.classes.push_back({c, name.str()});
  }
  const std::array<std::pair<Split, int>, 3> plan{{{Split::Train, cfg.per_class_train},
                                                   {Split::Val, cfg.per_class_val},
                                                   {Split::Test, cfg.per_class_test}}};
  std::size_t total = 0;
  for (const auto& [split, n] : plan) total += static_cast<std::size_t>(n) * static_cast<std::size_t>(cfg.classes);
  ds.embeddings.resize(static_cast<Eigen::Index>(total), cfg.dim);

  Eigen::Index row = 0;
  for (const auto& [split, n] : plan) {
    int serial = 0;
    for (int c = 0; c < cfg.classes; ++c) {
      for (int i = 0; i < n; ++i) {
        Embedding v = out.class_means.row(c).transpose();
        for (auto& x : v) x += cfg.sigma * gauss(rng);
        ds.embeddings.row(row++) = normalize(v).cast<float>().transpose();
        std::ostringstream id;
        id << to_string(split) << '-' << std::setw(6) << std::setfill('0') << serial++;
        ds.records.push_back({id.str(), ds.classes[static_cast<std::size_t>(c)], split, std::nullopt});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// store document

std::string store_to_json(const PrototypeStore& store, int indent) {
  ordered_json doc;
  doc["version"] = kStoreVersion;
  doc["dim"] = store.dim();
  doc["budget"] = store.config().budget ? ordered_json(*store.config().budget) : ordered_json(nullptr);
  doc["protect_server"] = store.config().protect_server;
  doc["clock"] = store.clock();
  doc["next_proto_id"] = store.next_proto_id();
  auto entries = ordered_json::array();
  for (const auto& e : store.entries()) {
    ordered_json j;
    j["proto_id"] = e.proto_id;
    j["class_id"] = e.label.id;
    j["class_name"] = e.label.name;
    j["source"] = e.source == Source::Server ? "server" : "user";
    j["created_seq"] = e.created_seq;
    j["last_used_seq"] = e.last_used_seq;
    j["vector"] = std::vector<double>(e.vector.begin(), e.vector.end());
    entries.push_back(std::move(j));
  }
  doc["entries"] = std::move(entries);
  return doc.dump(indent);
}

PrototypeStore store_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    const int version = doc.at("version").get<int>();
    if (version != kStoreVersion) throw Error(ErrorKind::FormatError, "unsupported store version " + std::to_string(version));
    const auto dim = doc.at("dim").get<Eigen::Index>();
    if (dim < 1) throw Error(ErrorKind::FormatError, "store dim must be >= 1");
    StoreConfig cfg;
    if (!doc.at("budget").is_null()) {
      const auto b = doc["budget"].get<std::int64_t>();
      if (b < 1) throw Error(ErrorKind::FormatError, "budget must be >= 1 or null");
      cfg.budget = static_cast<std::size_t>(b);
    }
    cfg.protect_server = doc.at("protect_server").get<bool>();

    std::vector<PrototypeEntry> entries;
    ProtoId max_id = 0;
    for (const auto& j : doc.at("entries")) {
      PrototypeEntry e;
      e.proto_id = j.at("proto_id").get<ProtoId>();
      e.label = {j.at("class_id").get<ClassId>(), j.at("class_name").get<std::string>()};
      const auto source = j.at("source").get<std::string>();
      if (source == "server") {
        e.source = Source::Server;
      } else if (source == "user") {
        e.source = Source::User;
      } else {
        throw Error(ErrorKind::FormatError, "unknown source '" + source + "'");
      }
      e.created_seq = j.at("created_seq").get<std::uint64_t>();
      e.last_used_seq = j.at("last_used_seq").get<std::uint64_t>();
      const auto values = j.at("vector").get<std::vector<double>>();
      e.vector = Eigen::Map<const Embedding>(values.data(), static_cast<Eigen::Index>(values.size()));
      max_id = std::max(max_id, e.proto_id + 1);
      entries.push_back(std::move(e));
    }
    const ProtoId next_id = doc.contains("next_proto_id") ? doc["next_proto_id"].get<ProtoId>() : max_id;
    return PrototypeStore::restore(dim, cfg, doc.at("clock").get<std::uint64_t>(), next_id, std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("store document: ") + e.what());
  } catch (const Error& e) {
    // a bad store document is a format problem unless the vectors disagree with dim
    if (e.kind() == ErrorKind::DimensionMismatch || e.kind() == ErrorKind::FormatError) throw;
    throw Error(ErrorKind::FormatError, e.what());
  }
}

void export_store(const PrototypeStore& store, const std::filesystem::path& path) {
  write_text(path, store_to_json(store) + "\n");
}

PrototypeStore import_store(const std::filesystem::path& path) { return store_from_json(read_text(path)); }

}  // namespace protocorrect
