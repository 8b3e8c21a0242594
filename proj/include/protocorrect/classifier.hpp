#pragma once

#include <vector>

#include "protocorrect/prototype_store.hpp"

namespace protocorrect {

struct ClassDistance {
  ClassLabel label;
  double distance = 0.0;

  friend bool operator==(const ClassDistance&, const ClassDistance&) = default;
};

struct Prediction {
  ClassLabel label;
  double distance = 0.0;
  ProtoId proto_id = 0;
  /// Distinct classes by ascending per-class minimum distance (ties by
  /// class id); the first element is always (label, distance).
  std::vector<ClassDistance> alternatives;
};

/// Nearest-prototype classification. Marks the winning prototype as used.
Prediction predict(PrototypeStore& store, const Embedding& query);

/// As predict(), with up to `k` ranked classes in `alternatives`. Only the
/// single winner's usage is updated.
Prediction predict_topk(PrototypeStore& store, const Embedding& query, int k);

/// Same result as predict_topk() but leaves the store untouched; safe to
/// call concurrently from several threads.
Prediction predict_readonly(const PrototypeStore& store, const Embedding& query, int k = 1);

}  // namespace protocorrect
