#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "protocorrect/core.hpp"

namespace protocorrect {

using ProtoId = std::uint64_t;

/// Where a prototype came from: server-side clustering or a user correction.
enum class Source { Server, User };

struct PrototypeEntry {
  ProtoId proto_id = 0;
  ClassLabel label;
  Embedding vector;
  Source source = Source::Server;
  std::uint64_t created_seq = 0;
  std::uint64_t last_used_seq = 0;
  Embedding unit;  // vector / ||vector||, cached for distance evaluation
};

struct StoreConfig {
  std::optional<std::size_t> budget;  // nullopt = unlimited
  bool protect_server = false;
};

struct NearestHit {
  ProtoId proto_id = 0;
  ClassLabel label;
  double distance = 0.0;
};

struct InsertResult {
  ProtoId proto_id = 0;
  std::optional<ProtoId> evicted;
};

struct StoreStats {
  std::size_t total = 0;
  std::map<ClassId, std::size_t> per_class;
  std::size_t server = 0;
  std::size_t user = 0;
  std::optional<std::size_t> budget;
  Eigen::Index dim = 0;
};

/// The evolving prototype set with a global capacity budget and LRU eviction.
///
/// A logical clock ticks on every insert and every usage-updating lookup.
/// "Used" means inserted or selected as the global argmin by nearest().
/// Ties are broken by ascending class id, then ascending insertion order.
///
/// Not internally synchronized: nearest() mutates usage metadata, so callers
/// must serialize it with inserts and evictions. The const lookups are safe
/// to run concurrently with each other.
class PrototypeStore {
 public:
  explicit PrototypeStore(Eigen::Index dim, StoreConfig cfg = {});

  /// Appends a prototype. If that pushes the store over budget, exactly one
  /// LRU entry (never the new one) is evicted before returning.
  InsertResult insert(const ClassLabel& label, const Embedding& vector, Source source);

  template <typename Derived>
  InsertResult insert(const ClassLabel& label, const Eigen::MatrixBase<Derived>& vector, Source source) {
    return insert(label, Embedding(vector.template cast<double>()), source);
  }

  /// Global argmin of cosine distance; marks the winner as used.
  NearestHit nearest(const Embedding& query);

  /// Same as nearest() without touching usage metadata.
  NearestHit peek_nearest(const Embedding& query) const;

  /// Cosine distance from `query` to every entry, aligned with entries().
  std::vector<double> distances(const Embedding& query) const;

  ProtoId evict_lru();

  StoreStats stats() const;

  const std::vector<PrototypeEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  Eigen::Index dim() const noexcept { return dim_; }
  const StoreConfig& config() const noexcept { return cfg_; }
  std::uint64_t clock() const noexcept { return clock_; }
  ProtoId next_proto_id() const noexcept { return next_id_; }

  /// Rebuilds a store from serialized state, validating every invariant.
  static PrototypeStore restore(Eigen::Index dim, StoreConfig cfg, std::uint64_t clock, ProtoId next_id,
                                std::vector<PrototypeEntry> entries);

 private:
  void check_query(const Embedding& query) const;
  std::size_t argmin(const Embedding& query, double* distance) const;
  std::optional<std::size_t> lru_candidate() const;
  bool evictable(const PrototypeEntry& e) const noexcept {
    return !(cfg_.protect_server && e.source == Source::Server);
  }

  Eigen::Index dim_;
  StoreConfig cfg_;
  std::vector<PrototypeEntry> entries_;  // in insertion order
  std::uint64_t clock_ = 0;
  ProtoId next_id_ = 0;
};

}  // namespace protocorrect
