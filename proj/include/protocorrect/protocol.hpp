#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "protocorrect/clustering.hpp"
#include "protocorrect/dataset.hpp"
#include "protocorrect/prototype_store.hpp"

namespace protocorrect {

struct ProtocolConfig {
  std::vector<int> shots{1, 2, 3, 4, 5, 7, 10, 20, 50};
  std::vector<std::uint64_t> seeds{0};
  KMeansConfig kmeans;
  StoreConfig store;
  /// Count the user-annotated support samples themselves in Acc_E.
  bool include_support_in_accE = false;

  void validate() const;
};

/// Row indices of a test set, split by whether the initial store gets them
/// right (D_C) or wrong (D_E).
struct CorrectnessSplit {
  std::vector<std::size_t> correct;
  std::vector<std::size_t> errors;
};

CorrectnessSplit split_by_correctness(const PrototypeStore& initial, const EmbeddingDataset& test);

/// Percentage of `rows` of `data` classified correctly (read-only); nullopt
/// when `rows` is empty.
std::optional<double> accuracy(const PrototypeStore& store, const EmbeddingDataset& data,
                               const std::vector<std::size_t>& rows);

struct Adaptation {
  PrototypeStore store;
  std::vector<std::size_t> support_rows;
};

/// Copies `initial`, draws up to `shots` misclassified samples per class
/// from `split.errors` and applies them as corrections. For one seed the
/// support set for s shots is a prefix of the set for any larger s.
Adaptation adapt_store(const PrototypeStore& initial, const EmbeddingDataset& test, const CorrectnessSplit& split,
                       int shots, std::uint64_t seed);

struct RunMetrics {
  int shots = 0;
  std::uint64_t seed = 0;
  std::optional<double> acc_E;  // nullopt when the evaluated error subset is empty
  std::optional<double> acc_C;  // nullopt when D_C is empty
  std::optional<double> forgetting;
  std::size_t support_count = 0;
  std::size_t eval_count = 0;
  std::size_t store_size = 0;

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

struct MetricsReport {
  double acc_base = 0.0;
  std::size_t test_count = 0;
  std::size_t correct_count = 0;
  std::size_t error_count = 0;
  int k = 3;
  std::optional<std::size_t> budget;
  bool include_support_in_accE = false;
  std::vector<int> shots;
  std::vector<std::uint64_t> seeds;
  std::vector<RunMetrics> runs;  // shots-major, then seeds, in config order

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport run_protocol(const EmbeddingDataset& train, const EmbeddingDataset& test, const ProtocolConfig& cfg);

/// Protocol against an already-built initial store.
MetricsReport run_protocol(const PrototypeStore& initial, const EmbeddingDataset& test, const ProtocolConfig& cfg);

enum class ReportFormat { Table, Json };

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);
std::string report_to_table(const MetricsReport& report);
void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format);

}  // namespace protocorrect
