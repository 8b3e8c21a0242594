#include "protocorrect/correction.hpp"

#include <algorithm>
#include <string>

namespace protocorrect {

ClassRegistry::ClassRegistry(std::vector<ClassLabel> labels) {
  std::sort(labels.begin(), labels.end());
  for (auto& l : labels) add(std::move(l));
}

const ClassLabel* ClassRegistry::find(ClassId id) const noexcept {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), id,
                             [](const ClassLabel& l, ClassId v) { return l.id < v; });
  return it != labels_.end() && it->id == id ? &*it : nullptr;
}

const ClassLabel* ClassRegistry::find(std::string_view name) const noexcept {
  auto it = std::find_if(labels_.begin(), labels_.end(), [&](const ClassLabel& l) { return l.name == name; });
  return it != labels_.end() ? &*it : nullptr;
}

bool ClassRegistry::contains(const ClassLabel& label) const noexcept {
  const auto* l = find(label.id);
  return l != nullptr && l->name == label.name;
}

const ClassLabel& ClassRegistry::add(ClassLabel label) {
  if (label.id < 0) throw Error(ErrorKind::UnknownClass, "class ids must be non-negative");
  if (find(label.id) != nullptr) {
    throw Error(ErrorKind::UnknownClass, "class id " + std::to_string(label.id) + " already registered");
  }
  if (find(label.name) != nullptr) {
    throw Error(ErrorKind::UnknownClass, "class name '" + label.name + "' already registered");
  }
  auto it = std::upper_bound(labels_.begin(), labels_.end(), label);
  return *labels_.insert(it, std::move(label));
}

ClassId ClassRegistry::next_id() const noexcept { return labels_.empty() ? 0 : labels_.back().id + 1; }

CorrectionOutcome correct(PrototypeStore& store, ClassRegistry& classes, const Embedding& embedding,
                          const ClassLabel& label, const CorrectionOptions& options) {
  const bool known = classes.contains(label);
  if (!known) {
    if (!options.open_class) {
      throw Error(ErrorKind::UnknownClass,
                  "class '" + label.name + "' (id " + std::to_string(label.id) + ") is not registered");
    }
    if (classes.find(label.id) != nullptr || classes.find(label.name) != nullptr || label.id < 0) {
      throw Error(ErrorKind::UnknownClass, "label '" + label.name + "' conflicts with a registered class");
    }
  }

  CorrectionOutcome out;
  if (!store.empty()) out.prediction_before = predict_readonly(store, embedding);
  const auto inserted = store.insert(label, embedding, Source::User);
  if (!known) classes.add(label);

  out.added_proto_id = inserted.proto_id;
  out.evicted_proto_id = inserted.evicted;
  out.store_size_after = store.size();
  out.prediction_after = predict_readonly(store, embedding);
  return out;
}

std::vector<CorrectionOutcome> correct_batch(PrototypeStore& store, ClassRegistry& classes,
                                             std::span<const Correction> corrections,
                                             const CorrectionOptions& options) {
  std::vector<CorrectionOutcome> outcomes;
  outcomes.reserve(corrections.size());
  for (const auto& c : corrections) outcomes.push_back(correct(store, classes, c.embedding, c.label, options));
  return outcomes;
}

}  // namespace protocorrect
