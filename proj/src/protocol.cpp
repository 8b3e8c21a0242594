#include "protocorrect/protocol.hpp"

#include <cmath>
#include <fstream>
#include <array>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "protocorrect/classifier.hpp"
#include "protocorrect/correction.hpp"

namespace protocorrect {

void ProtocolConfig::validate() const {
  if (shots.empty()) throw Error(ErrorKind::InvalidConfig, "shots list is empty");
  for (std::size_t i = 0; i < shots.size(); ++i) {
    if (shots[i] < 1) throw Error(ErrorKind::InvalidConfig, "shots must be positive");
    if (i > 0 && shots[i] <= shots[i - 1]) throw Error(ErrorKind::InvalidConfig, "shots must be strictly increasing");
  }
  if (seeds.empty()) throw Error(ErrorKind::InvalidConfig, "seed list is empty");
  if (kmeans.k < 1) throw Error(ErrorKind::InvalidConfig, "k must be >= 1");
  if (store.budget && *store.budget < 1) throw Error(ErrorKind::InvalidConfig, "budget must be >= 1");
}

CorrectnessSplit split_by_correctness(const PrototypeStore& initial, const EmbeddingDataset& test) {
  if (initial.empty()) throw Error(ErrorKind::EmptyStore, "initial store is empty");
  if (test.empty()) throw Error(ErrorKind::EmptyDataset, "test set is empty");
  CorrectnessSplit split;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto p = predict_readonly(initial, test.embedding(i));
    (p.label.id == test.records[i].label.id ? split.correct : split.errors).push_back(i);
  }
  return split;
}

std::optional<double> accuracy(const PrototypeStore& store, const EmbeddingDataset& data,
                               const std::vector<std::size_t>& rows) {
  if (rows.empty()) return std::nullopt;
  std::size_t hits = 0;
  for (std::size_t r : rows) {
    if (predict_readonly(store, data.embedding(r)).label.id == data.records[r].label.id) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(rows.size());
}

Adaptation adapt_store(const PrototypeStore& initial, const EmbeddingDataset& test, const CorrectnessSplit& split,
                       int shots, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Correction> corrections;
  std::vector<std::size_t> support;
  for (const auto& label : test.classes) {
    std::vector<std::size_t> pool;
    for (std::size_t r : split.errors) {
      if (test.records[r].label.id == label.id) pool.push_back(r);
    }
    // full shuffle regardless of `shots` so supports nest across shot counts
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(shots));
    for (std::size_t i = 0; i < take; ++i) {
      support.push_back(pool[i]);
      corrections.push_back({test.embedding(pool[i]), test.records[pool[i]].label});
    }
  }

  Adaptation out{initial, std::move(support)};
  ClassRegistry classes(test.classes);
  correct_batch(out.store, classes, corrections);
  return out;
}

MetricsReport run_protocol(const EmbeddingDataset& train, const EmbeddingDataset& test, const ProtocolConfig& cfg) {
  cfg.validate();
  return run_protocol(build_initial_prototypes(train, cfg.kmeans, cfg.store), test, cfg);
}

MetricsReport run_protocol(const PrototypeStore& initial, const EmbeddingDataset& test, const ProtocolConfig& cfg) {
  cfg.validate();
  const auto split = split_by_correctness(initial, test);

  MetricsReport report;
  report.test_count = test.size();
  report.correct_count = split.correct.size();
  report.error_count = split.errors.size();
  report.acc_base = 100.0 * static_cast<double>(split.correct.size()) / static_cast<double>(test.size());
  report.k = cfg.kmeans.k;
  report.budget = cfg.store.budget;
  report.include_support_in_accE = cfg.include_support_in_accE;
  report.shots = cfg.shots;
  report.seeds = cfg.seeds;

  for (int s : cfg.shots) {
    for (std::uint64_t seed : cfg.seeds) {
      const auto adapted = adapt_store(initial, test, split, s, seed);
      std::vector<std::size_t> eval_rows;
      if (cfg.include_support_in_accE) {
        eval_rows = split.errors;
      } else {
        const std::set<std::size_t> support(adapted.support_rows.begin(), adapted.support_rows.end());
        for (std::size_t r : split.errors) {
          if (!support.contains(r)) eval_rows.push_back(r);
        }
      }
      RunMetrics m;
      m.shots = s;
      m.seed = seed;
      m.acc_E = accuracy(adapted.store, test, eval_rows);
      m.acc_C = accuracy(adapted.store, test, split.correct);
      if (m.acc_C) m.forgetting = 100.0 - *m.acc_C;
      m.support_count = adapted.support_rows.size();
      m.eval_count = eval_rows.size();
      m.store_size = adapted.store.size();
      report.runs.push_back(m);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// reporting

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json opt(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> opt_double(const nlohmann::json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

struct Summary {
  std::optional<double> mean;
  std::optional<double> stddev;  // sample std, only with >= 2 values
};

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double m = sum / static_cast<double>(xs.size());
  s.mean = m;
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

std::string format_cell(const Summary& s, bool with_std, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision);
  if (!s.mean) {
    os << "n/a";
  } else {
    os << *s.mean;
    if (with_std) os << " ± " << s.stddev.value_or(0.0);
  }
  return os.str();
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  ordered_json doc;
  doc["acc_base"] = r.acc_base;
  doc["test_count"] = r.test_count;
  doc["correct_count"] = r.correct_count;
  doc["error_count"] = r.error_count;
  doc["k"] = r.k;
  doc["budget"] = r.budget ? ordered_json(*r.budget) : ordered_json(nullptr);
  doc["include_support_in_accE"] = r.include_support_in_accE;
  doc["shots"] = r.shots;
  doc["seeds"] = r.seeds;
  auto runs = ordered_json::array();
  for (const auto& m : r.runs) {
    ordered_json j;
    j["shots"] = m.shots;
    j["seed"] = m.seed;
    j["acc_E"] = opt(m.acc_E);
    j["acc_C"] = opt(m.acc_C);
    j["forgetting"] = opt(m.forgetting);
    j["support_count"] = m.support_count;
    j["eval_count"] = m.eval_count;
    j["store_size"] = m.store_size;
    runs.push_back(std::move(j));
  }
  doc["runs"] = std::move(runs);
  return doc.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    MetricsReport r;
    r.acc_base = doc.at("acc_base").get<double>();
    r.test_count = doc.at("test_count").get<std::size_t>();
    r.correct_count = doc.at("correct_count").get<std::size_t>();
    r.error_count = doc.at("error_count").get<std::size_t>();
    r.k = doc.at("k").get<int>();
    if (!doc.at("budget").is_null()) r.budget = doc["budget"].get<std::size_t>();
    r.include_support_in_accE = doc.at("include_support_in_accE").get<bool>();
    r.shots = doc.at("shots").get<std::vector<int>>();
    r.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& j : doc.at("runs")) {
      RunMetrics m;
      m.shots = j.at("shots").get<int>();
      m.seed = j.at("seed").get<std::uint64_t>();
      m.acc_E = opt_double(j.at("acc_E"));
      m.acc_C = opt_double(j.at("acc_C"));
      m.forgetting = opt_double(j.at("forgetting"));
      m.support_count = j.at("support_count").get<std::size_t>();
      m.eval_count = j.at("eval_count").get<std::size_t>();
      m.store_size = j.at("store_size").get<std::size_t>();
      r.runs.push_back(m);
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("report document: ") + e.what());
  }
}

std::string report_to_table(const MetricsReport& r) {
  const bool with_std = r.seeds.size() > 1;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "Acc_base: " << r.acc_base << "%  (test " << r.test_count << ", D_C " << r.correct_count << ", D_E "
     << r.error_count << ")\n";
  os << "Acc_E " << (r.include_support_in_accE ? "includes" : "excludes") << " support samples; budget "
     << (r.budget ? std::to_string(*r.budget) : std::string("unlimited")) << "; K=" << r.k << "; seeds "
     << r.seeds.size() << "\n";

  std::vector<std::array<std::string, 3>> rows;
  rows.push_back({"shots", with_std ? "Acc_E (mean ± std)" : "Acc_E", with_std ? "For (mean ± std)" : "For"});
  for (int s : r.shots) {
    std::vector<double> acc_e, forgetting;
    for (const auto& m : r.runs) {
      if (m.shots != s) continue;
      if (m.acc_E) acc_e.push_back(*m.acc_E);
      if (m.forgetting) forgetting.push_back(*m.forgetting);
    }
    rows.push_back({std::to_string(s), format_cell(summarize(acc_e), with_std, 2),
                    format_cell(summarize(forgetting), with_std, 3)});
  }

  // width in code points so the ± sign does not skew alignment
  auto width = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  };
  std::array<std::size_t, 3> w{};
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 3; ++c) w[c] = std::max(w[c], width(row[c]));
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (c > 0) os << "  ";
      os << std::string(w[c] - width(row[c]), ' ') << row[c];
    }
    os << "\n";
  }
  return os.str();
}

void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format) {
  for (const auto& m : report.runs) {
    if (m.acc_C.has_value() != m.forgetting.has_value() || (m.acc_C && *m.forgetting != 100.0 - *m.acc_C)) {
      throw Error(ErrorKind::InvalidConfig, "report violates For = 100 - Acc_C");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << (format == ReportFormat::Json ? report_to_json(report) : report_to_table(report));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

}  // namespace protocorrect
