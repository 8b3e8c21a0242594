#pragma once

#include <cstdint>
#include <vector>

#include "protocorrect/core.hpp"
#include "protocorrect/dataset.hpp"
#include "protocorrect/prototype_store.hpp"

namespace protocorrect {

struct KMeansConfig {
  int k = 3;
  int max_iter = 100;
  double tol = 1e-6;  // relative objective improvement
  std::uint64_t seed = 0;
};

struct KMeansResult {
  RowMatrix<double> centroids;
  /// Objective after seeding, then after each Lloyd iteration.
  std::vector<double> objective_history;
  int iterations = 0;
};

/// Sum over rows of `features` of the squared distance to the nearest
/// centroid row.
double kmeans_objective(const Eigen::Ref<const RowMatrix<double>>& features,
                        const Eigen::Ref<const RowMatrix<double>>& centroids);

/// K-means++ seeding followed by Lloyd iterations. With at most k distinct
/// rows the distinct rows themselves are returned, in first-seen order.
KMeansResult kmeans(const Eigen::Ref<const RowMatrix<double>>& features, const KMeansConfig& cfg);

/// Clusters each class of `train` and seeds a store with the centroids as
/// Server prototypes, classes in ascending id order.
PrototypeStore build_initial_prototypes(const EmbeddingDataset& train, const KMeansConfig& cfg,
                                        const StoreConfig& store_cfg = {});

}  // namespace protocorrect
