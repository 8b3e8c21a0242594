#pragma once

#include <map>
#include <span>
#include <utility>

#include "protocorrect/core.hpp"

namespace protocorrect {

/// Mean L1 distance between paired teacher and student embeddings.
double distillation_l1(std::span<const Embedding> teacher, std::span<const Embedding> student);

enum class ProtoMetric {
  SquaredEuclidean,  // logits = -||q - p||^2 / T
  Cosine,            // logits = -cosdist(q, p) / T
};

struct ProtoNetConfig {
  ProtoMetric metric = ProtoMetric::SquaredEuclidean;
  double temperature = 1.0;
};

using LabeledQuery = std::pair<Embedding, ClassId>;
using PrototypeMap = std::map<ClassId, Embedding>;

/// Mean softmax cross-entropy over negative prototype distances, computed
/// with log-sum-exp.
double protonet_loss(std::span<const LabeledQuery> queries, const PrototypeMap& prototypes,
                     const ProtoNetConfig& cfg = {});

/// Analytic gradient of protonet_loss for a single query with respect to the
/// query vector. Squared-Euclidean metric only.
Embedding protonet_query_gradient(const Embedding& query, ClassId label, const PrototypeMap& prototypes,
                                  const ProtoNetConfig& cfg = {});

}  // namespace protocorrect
