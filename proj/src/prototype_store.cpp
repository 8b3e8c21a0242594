#include "protocorrect/prototype_store.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace protocorrect {

namespace {

// same value as cosine_distance, from pre-normalized operands
double unit_distance(const Embedding& q_unit, const PrototypeEntry& e) {
  return std::clamp(0.5 * (q_unit - e.unit).squaredNorm(), 0.0, 2.0);
}

// (distance, class id, created_seq) lexicographic
bool better(double d, const PrototypeEntry& e, double best_d, const PrototypeEntry& best) {
  if (d != best_d) return d < best_d;
  if (e.label.id != best.label.id) return e.label.id < best.label.id;
  return e.created_seq < best.created_seq;
}

}  // namespace

PrototypeStore::PrototypeStore(Eigen::Index dim, StoreConfig cfg) : dim_(dim), cfg_(cfg) {
  if (dim < 1) throw Error(ErrorKind::InvalidConfig, "store dim must be >= 1");
  if (cfg_.budget && *cfg_.budget < 1) throw Error(ErrorKind::InvalidConfig, "budget must be >= 1");
}

void PrototypeStore::check_query(const Embedding& query) const {
  validate_embedding(query);
  if (query.size() != dim_) {
    throw Error(ErrorKind::DimensionMismatch,
                "store dim " + std::to_string(dim_) + ", vector dim " + std::to_string(query.size()));
  }
  detail::checked_norm(query);
}

InsertResult PrototypeStore::insert(const ClassLabel& label, const Embedding& vector, Source source) {
  check_query(vector);

  std::optional<std::size_t> victim;
  if (cfg_.budget && entries_.size() + 1 > *cfg_.budget) {
    victim = lru_candidate();
    if (!victim) {
      throw Error(ErrorKind::BudgetUnsatisfiable,
                  "store is at budget " + std::to_string(*cfg_.budget) + " and no entry is evictable");
    }
  }

  PrototypeEntry e;
  e.proto_id = next_id_++;
  e.label = label;
  e.vector = vector;
  e.source = source;
  e.created_seq = e.last_used_seq = ++clock_;
  e.unit = vector / vector.norm();
  entries_.push_back(std::move(e));

  InsertResult result{entries_.back().proto_id, std::nullopt};
  if (victim) {
    result.evicted = entries_[*victim].proto_id;
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(*victim));
  }
  return result;
}

std::size_t PrototypeStore::argmin(const Embedding& query, double* distance) const {
  if (entries_.empty()) throw Error(ErrorKind::EmptyStore, "nearest on an empty store");
  check_query(query);
  const Embedding qu = query / query.norm();
  std::size_t best = 0;
  double best_d = unit_distance(qu, entries_[0]);
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    const double d = unit_distance(qu, entries_[i]);
    if (better(d, entries_[i], best_d, entries_[best])) {
      best = i;
      best_d = d;
    }
  }
  *distance = best_d;
  return best;
}

NearestHit PrototypeStore::nearest(const Embedding& query) {
  double d = 0.0;
  const std::size_t i = argmin(query, &d);
  entries_[i].last_used_seq = ++clock_;
  return {entries_[i].proto_id, entries_[i].label, d};
}

NearestHit PrototypeStore::peek_nearest(const Embedding& query) const {
  double d = 0.0;
  const std::size_t i = argmin(query, &d);
  return {entries_[i].proto_id, entries_[i].label, d};
}

std::vector<double> PrototypeStore::distances(const Embedding& query) const {
  check_query(query);
  const Embedding qu = query / query.norm();
  std::vector<double> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(unit_distance(qu, e));
  return out;
}

std::optional<std::size_t> PrototypeStore::lru_candidate() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (!evictable(e)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = entries_[*best];
    if (e.last_used_seq < b.last_used_seq ||
        (e.last_used_seq == b.last_used_seq && e.created_seq < b.created_seq)) {
      best = i;
    }
  }
  return best;
}

ProtoId PrototypeStore::evict_lru() {
  if (entries_.empty()) throw Error(ErrorKind::EmptyStore, "evict on an empty store");
  const auto victim = lru_candidate();
  if (!victim) throw Error(ErrorKind::NothingEvictable, "all entries are protected");
  const ProtoId id = entries_[*victim].proto_id;
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(*victim));
  return id;
}

StoreStats PrototypeStore::stats() const {
  StoreStats s;
  s.total = entries_.size();
  s.budget = cfg_.budget;
  s.dim = dim_;
  for (const auto& e : entries_) {
    ++s.per_class[e.label.id];
    ++(e.source == Source::Server ? s.server : s.user);
  }
  return s;
}

PrototypeStore PrototypeStore::restore(Eigen::Index dim, StoreConfig cfg, std::uint64_t clock, ProtoId next_id,
                                       std::vector<PrototypeEntry> entries) {
  PrototypeStore store(dim, cfg);
  if (cfg.budget && entries.size() > *cfg.budget) {
    throw Error(ErrorKind::FormatError, "entry count exceeds budget");
  }
  std::set<ProtoId> ids;
  std::uint64_t prev_created = 0;
  for (auto& e : entries) {
    store.check_query(e.vector);
    if (!ids.insert(e.proto_id).second) throw Error(ErrorKind::FormatError, "duplicate proto_id");
    if (e.proto_id >= next_id) throw Error(ErrorKind::FormatError, "proto_id >= next_proto_id");
    if (e.created_seq > e.last_used_seq || e.last_used_seq > clock) {
      throw Error(ErrorKind::FormatError, "inconsistent sequence numbers");
    }
    if (e.created_seq <= prev_created) throw Error(ErrorKind::FormatError, "entries not in insertion order");
    prev_created = e.created_seq;
    e.unit = e.vector / e.vector.norm();
  }
  store.entries_ = std::move(entries);
  store.clock_ = clock;
  store.next_id_ = next_id;
  return store;
}

}  // namespace protocorrect
