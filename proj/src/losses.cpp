#include "protocorrect/losses.hpp"

#include <string>
#include <vector>

namespace protocorrect {

double distillation_l1(std::span<const Embedding> teacher, std::span<const Embedding> student) {
  if (teacher.size() != student.size()) {
    throw Error(ErrorKind::LengthMismatch, "teacher batch " + std::to_string(teacher.size()) +
                                               " vs student batch " + std::to_string(student.size()));
  }
  if (teacher.empty()) throw Error(ErrorKind::EmptyInput, "empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) total += l1_distance(teacher[i], student[i]);
  return total / static_cast<double>(teacher.size());
}

namespace {

void check_setup(const PrototypeMap& prototypes, const ProtoNetConfig& cfg) {
  if (prototypes.size() < 2) throw Error(ErrorKind::InvalidConfig, "protonet loss needs >= 2 classes");
  if (!(cfg.temperature > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be > 0");
}

// Negative scaled distances to every prototype, in map order; also returns
// the position of `label`.
std::vector<double> logits(const Embedding& q, ClassId label, const PrototypeMap& prototypes,
                           const ProtoNetConfig& cfg, std::size_t* target) {
  std::vector<double> out;
  out.reserve(prototypes.size());
  bool found = false;
  for (const auto& [id, p] : prototypes) {
    if (id == label) {
      *target = out.size();
      found = true;
    }
    const double d = cfg.metric == ProtoMetric::SquaredEuclidean ? squared_euclidean(q, p) : cosine_distance(q, p);
    out.push_back(-d / cfg.temperature);
  }
  if (!found) throw Error(ErrorKind::UnknownClass, "query label " + std::to_string(label) + " has no prototype");
  return out;
}

double log_sum_exp(const std::vector<double>& z) {
  double m = z.front();
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace

double protonet_loss(std::span<const LabeledQuery> queries, const PrototypeMap& prototypes,
                     const ProtoNetConfig& cfg) {
  if (queries.empty()) throw Error(ErrorKind::EmptyInput, "no queries");
  check_setup(prototypes, cfg);
  double total = 0.0;
  for (const auto& [q, label] : queries) {
    std::size_t t = 0;
    const auto z = logits(q, label, prototypes, cfg, &t);
    total += log_sum_exp(z) - z[t];
  }
  return total / static_cast<double>(queries.size());
}

Embedding protonet_query_gradient(const Embedding& query, ClassId label, const PrototypeMap& prototypes,
                                  const ProtoNetConfig& cfg) {
  check_setup(prototypes, cfg);
  if (cfg.metric != ProtoMetric::SquaredEuclidean) {
    throw Error(ErrorKind::InvalidConfig, "analytic gradient implemented for squared Euclidean only");
  }
  std::size_t t = 0;
  const auto z = logits(query, label, prototypes, cfg, &t);
  const double lse = log_sum_exp(z);

  // dL/dq = (2/T) * ((q - p_y) - sum_c softmax_c (q - p_c))
  Embedding grad = Embedding::Zero(query.size());
  std::size_t i = 0;
  for (const auto& [id, p] : prototypes) {
    const double w = std::exp(z[i] - lse) - (i == t ? 1.0 : 0.0);
    grad -= w * (query - p);
    ++i;
  }
  return grad * (2.0 / cfg.temperature);
}

}  // namespace protocorrect
