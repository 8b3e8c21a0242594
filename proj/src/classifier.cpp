#include "protocorrect/classifier.hpp"

#include <algorithm>
#include <map>

namespace protocorrect {

namespace {

std::vector<ClassDistance> ranked_classes(const PrototypeStore& store, const Embedding& query, int k) {
  const auto d = store.distances(query);
  std::map<ClassId, ClassDistance> per_class;
  const auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto [it, fresh] = per_class.try_emplace(entries[i].label.id, ClassDistance{entries[i].label, d[i]});
    if (!fresh) it->second.distance = std::min(it->second.distance, d[i]);
  }
  std::vector<ClassDistance> ranked;
  ranked.reserve(per_class.size());
  for (auto& [id, cd] : per_class) ranked.push_back(std::move(cd));
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const ClassDistance& a, const ClassDistance& b) { return a.distance < b.distance; });
  if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));
  return ranked;
}

Prediction assemble(const NearestHit& hit, std::vector<ClassDistance> ranked) {
  Prediction p;
  p.label = hit.label;
  p.distance = hit.distance;
  p.proto_id = hit.proto_id;
  p.alternatives = std::move(ranked);
  return p;
}

void check_k(int k) {
  if (k < 1) throw Error(ErrorKind::InvalidConfig, "top-k must be >= 1");
}

}  // namespace

Prediction predict(PrototypeStore& store, const Embedding& query) { return predict_topk(store, query, 1); }

Prediction predict_topk(PrototypeStore& store, const Embedding& query, int k) {
  check_k(k);
  if (store.empty()) throw Error(ErrorKind::EmptyStore, "predict on an empty store");
  if (k == 1) {
    const auto hit = store.nearest(query);
    return assemble(hit, {ClassDistance{hit.label, hit.distance}});
  }
  auto ranked = ranked_classes(store, query, k);
  return assemble(store.nearest(query), std::move(ranked));
}

Prediction predict_readonly(const PrototypeStore& store, const Embedding& query, int k) {
  check_k(k);
  if (store.empty()) throw Error(ErrorKind::EmptyStore, "predict on an empty store");
  if (k == 1) {
    const auto hit = store.peek_nearest(query);
    return assemble(hit, {ClassDistance{hit.label, hit.distance}});
  }
  return assemble(store.peek_nearest(query), ranked_classes(store, query, k));
}

}  // namespace protocorrect
