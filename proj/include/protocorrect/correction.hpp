#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "protocorrect/classifier.hpp"
#include "protocorrect/prototype_store.hpp"

namespace protocorrect {

/// The set of classes a store may hold, indexed by id and by name.
class ClassRegistry {
 public:
  ClassRegistry() = default;
  explicit ClassRegistry(std::vector<ClassLabel> labels);

  const ClassLabel* find(ClassId id) const noexcept;
  const ClassLabel* find(std::string_view name) const noexcept;
  /// True when both id and name match a registered class.
  bool contains(const ClassLabel& label) const noexcept;
  /// Registers `label`; throws UnknownClass if its id or name is taken by another class.
  const ClassLabel& add(ClassLabel label);
  ClassId next_id() const noexcept;

  const std::vector<ClassLabel>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }

 private:
  std::vector<ClassLabel> labels_;  // ascending id
};

struct CorrectionOptions {
  /// Accept labels outside the registry and register them as new classes.
  bool open_class = false;
};

struct CorrectionOutcome {
  ProtoId added_proto_id = 0;
  std::optional<ProtoId> evicted_proto_id;
  std::size_t store_size_after = 0;
  std::optional<Prediction> prediction_before;  // empty when the store was empty
  Prediction prediction_after;
};

struct Correction {
  Embedding embedding;
  ClassLabel label;
};

/// Adds `embedding` as a User prototype of `label`. Prototypes of every
/// other class are left as they were, apart from at most one LRU eviction
/// when the budget is full. The before/after predictions are read-only and
/// do not count as usage. Atomic: on error nothing changes.
CorrectionOutcome correct(PrototypeStore& store, ClassRegistry& classes, const Embedding& embedding,
                          const ClassLabel& label, const CorrectionOptions& options = {});

/// Applies corrections in order, stopping at the first failure. Items applied
/// before the failure stay applied.
std::vector<CorrectionOutcome> correct_batch(PrototypeStore& store, ClassRegistry& classes,
                                             std::span<const Correction> corrections,
                                             const CorrectionOptions& options = {});

}  // namespace protocorrect
