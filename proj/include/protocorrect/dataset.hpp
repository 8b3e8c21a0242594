#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protocorrect/core.hpp"
#include "protocorrect/prototype_store.hpp"

namespace protocorrect {

enum class Split { Train, Val, Test };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view text);

struct Record {
  std::string id;
  ClassLabel label;
  Split split = Split::Train;
  std::optional<std::string> image;
};

/// Aligned embeddings and metadata. Row i of `embeddings` belongs to
/// `records[i]`. Embeddings are stored in 32-bit floats; `classes` is the
/// full label space 0..C-1 even when this instance holds a single split.
struct EmbeddingDataset {
  Eigen::Index dim = 0;
  RowMatrix<float> embeddings;
  std::vector<Record> records;
  std::vector<ClassLabel> classes;
  bool rescaled_on_ingest = false;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  Embedding embedding(std::size_t row) const {
    return embeddings.row(static_cast<Eigen::Index>(row)).transpose().cast<double>();
  }

  /// Records of one split, same class space.
  EmbeddingDataset subset(Split split) const;
  EmbeddingDataset subset(const std::vector<std::size_t>& rows) const;

  /// Throws FormatError if ids repeat, dims disagree, or labels are not a
  /// contiguous 0..C-1 index space consistent with `classes`.
  void validate() const;
};

struct SyntheticConfig {
  int classes = 10;
  int dim = 32;
  int per_class_train = 50;
  int per_class_val = 0;
  int per_class_test = 100;
  double sigma = 0.25;
  std::uint64_t seed = 0;
  /// Class mean directions are redrawn (seed + 1, seed + 2, ...) until every
  /// pair is farther apart than this cosine distance.
  double min_mean_separation = 0.5;
};

struct SyntheticDataset {
  EmbeddingDataset data;
  RowMatrix<double> class_means;  // unit-norm, one row per class
  std::uint64_t effective_seed = 0;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

/// Writes `<base>.pemb` and `<base>.meta.jsonl`.
void write_embeddings(const EmbeddingDataset& dataset, const std::filesystem::path& base);

/// Reads the pair written by write_embeddings. Rows whose norm differs from
/// 1 by more than 1e-6 are L2-normalized and `rescaled_on_ingest` is set.
EmbeddingDataset read_embeddings(const std::filesystem::path& base);

std::string store_to_json(const PrototypeStore& store, int indent = 2);
PrototypeStore store_from_json(const std::string& text);
void export_store(const PrototypeStore& store, const std::filesystem::path& path);
PrototypeStore import_store(const std::filesystem::path& path);

}  // namespace protocorrect
