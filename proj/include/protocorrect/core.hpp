#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "protocorrect/error.hpp"

namespace protocorrect {

/// Embeddings are column vectors. Storage may be float; all distance math
/// below promotes to double.
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Embedding = Vector<double>;
using EmbeddingF = Vector<float>;

/// Row-major matrix where each row is one embedding.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ClassId = std::int64_t;

struct ClassLabel {
  ClassId id = 0;
  std::string name;

  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
  friend auto operator<=>(const ClassLabel& a, const ClassLabel& b) { return a.id <=> b.id; }
};

/// Norms at or below this are treated as the zero vector.
inline constexpr double kZeroNormEpsilon = 1e-12;

namespace detail {

template <typename A, typename B>
void require_same_dim(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  if (u.size() != v.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "dim " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
}

template <typename A>
double checked_norm(const Eigen::MatrixBase<A>& u) {
  const double n = u.template cast<double>().norm();
  if (!(n > kZeroNormEpsilon)) {
    throw Error(ErrorKind::ZeroVector, "vector norm " + std::to_string(n) + " <= 1e-12");
  }
  return n;
}

}  // namespace detail

/// Throws unless `v` is non-empty and every component is finite.
template <typename Derived>
void validate_embedding(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() < 1) throw Error(ErrorKind::EmptyInput, "embedding has dimension 0");
  if (!v.allFinite()) throw Error(ErrorKind::NonFinite, "embedding contains NaN or Inf");
}

/// 1 - cos(u, v), in [0, 2].
template <typename A, typename B>
double cosine_distance(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  detail::require_same_dim(u, v);
  const double nu = detail::checked_norm(u);
  const double nv = detail::checked_norm(v);
  // 1 - cos written as half the squared chord between unit vectors: no
  // cancellation near 0, and exactly 0 for identical inputs
  const double d = 0.5 * (u.template cast<double>() / nu - v.template cast<double>() / nv).squaredNorm();
  return std::clamp(d, 0.0, 2.0);
}

template <typename A, typename B>
double l1_distance(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  detail::require_same_dim(u, v);
  return (u.template cast<double>() - v.template cast<double>()).cwiseAbs().sum();
}

template <typename A, typename B>
double squared_euclidean(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  detail::require_same_dim(u, v);
  return (u.template cast<double>() - v.template cast<double>()).squaredNorm();
}

template <typename Derived>
Vector<typename Derived::Scalar> normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const double n = detail::checked_norm(v);
  return (v.template cast<double>() / n).template cast<Scalar>();
}

/// Mean of the rows of `rows` (one embedding per row).
template <typename Derived>
Embedding mean_of_rows(const Eigen::MatrixBase<Derived>& rows) {
  if (rows.rows() == 0) throw Error(ErrorKind::EmptyInput, "mean of zero vectors");
  return rows.template cast<double>().colwise().mean().transpose();
}

template <typename Scalar>
Embedding mean(std::span<const Vector<Scalar>> vs) {
  if (vs.empty()) throw Error(ErrorKind::EmptyInput, "mean of zero vectors");
  Embedding acc = Embedding::Zero(vs.front().size());
  for (const auto& v : vs) {
    detail::require_same_dim(acc, v);
    acc += v.template cast<double>();
  }
  return acc / static_cast<double>(vs.size());
}

inline Embedding mean(const std::vector<Embedding>& vs) { return mean(std::span<const Embedding>(vs)); }

}  // namespace protocorrect
