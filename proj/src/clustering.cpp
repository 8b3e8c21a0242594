#include "protocorrect/clustering.hpp"

#include <cassert>
#include <limits>
#include <random>
#include <string>

namespace protocorrect {

namespace {

using Rows = Eigen::Ref<const RowMatrix<double>>;

void check_features(const Rows& features) {
  if (features.rows() == 0) throw Error(ErrorKind::EmptyInput, "no features to cluster");
  if (features.cols() == 0) throw Error(ErrorKind::EmptyInput, "features have dimension 0");
  if (!features.allFinite()) throw Error(ErrorKind::NonFinite, "features contain NaN or Inf");
}

std::vector<Eigen::Index> distinct_rows(const Rows& features) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    bool seen = false;
    for (Eigen::Index j : keep) {
      if ((features.row(i).array() == features.row(j).array()).all()) {
        seen = true;
        break;
      }
    }
    if (!seen) keep.push_back(i);
  }
  return keep;
}

// Index of the nearest centroid; `current` wins ties so settled points stay put.
Eigen::Index nearest_centroid(const Rows& features, Eigen::Index row, const RowMatrix<double>& centroids,
                              Eigen::Index current, double* d2) {
  Eigen::Index best = current >= 0 ? current : 0;
  double best_d = (features.row(row) - centroids.row(best)).squaredNorm();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (features.row(row) - centroids.row(c)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  *d2 = best_d;
  return best;
}

RowMatrix<double> kmeans_pp_seed(const Rows& features, int k, std::mt19937_64& rng) {
  const Eigen::Index n = features.rows();
  RowMatrix<double> centroids(k, features.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centroids.row(0) = features.row(pick(rng));

  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (features.row(i) - centroids.row(0)).squaredNorm();

  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    std::uniform_real_distribution<double> u(0.0, total);
    const double target = u(rng);
    Eigen::Index chosen = -1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      acc += d2[i];
      chosen = i;
      if (acc >= target) break;
    }
    // chosen is -1 only if every point coincides with a centroid; callers
    // guarantee more than k distinct points
    assert(chosen >= 0);
    centroids.row(c) = features.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (features.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

double kmeans_objective(const Rows& features, const Rows& centroids) {
  if (features.rows() == 0 || centroids.rows() == 0) {
    throw Error(ErrorKind::EmptyInput, "objective needs features and centroids");
  }
  if (features.cols() != centroids.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "features and centroids differ in dimension");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    total += (centroids.rowwise() - features.row(i)).rowwise().squaredNorm().minCoeff();
  }
  return total;
}

KMeansResult kmeans(const Rows& features, const KMeansConfig& cfg) {
  if (cfg.k < 1) throw Error(ErrorKind::InvalidConfig, "k must be >= 1");
  if (cfg.max_iter < 1) throw Error(ErrorKind::InvalidConfig, "max_iter must be >= 1");
  if (!(cfg.tol >= 0.0)) throw Error(ErrorKind::InvalidConfig, "tol must be >= 0");
  check_features(features);

  KMeansResult result;
  const auto distinct = distinct_rows(features);
  if (static_cast<int>(distinct.size()) <= cfg.k) {
    result.centroids.resize(static_cast<Eigen::Index>(distinct.size()), features.cols());
    for (std::size_t i = 0; i < distinct.size(); ++i) {
      result.centroids.row(static_cast<Eigen::Index>(i)) = features.row(distinct[i]);
    }
    result.objective_history.push_back(kmeans_objective(features, result.centroids));
    return result;
  }

  const Eigen::Index n = features.rows();
  const int k = cfg.k;
  std::mt19937_64 rng(cfg.seed);
  RowMatrix<double> centroids = kmeans_pp_seed(features, k, rng);

  std::vector<Eigen::Index> assign(static_cast<std::size_t>(n), -1);
  Eigen::VectorXd cost(n);
  auto assign_all = [&] {
    bool changed = false;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& a = assign[static_cast<std::size_t>(i)];
      const Eigen::Index c = nearest_centroid(features, i, centroids, a, &cost[i]);
      changed = changed || c != a;
      a = c;
      total += cost[i];
    }
    return std::pair{changed, total};
  };

  double objective = assign_all().second;
  result.objective_history.push_back(objective);

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    RowMatrix<double> sums = RowMatrix<double>::Zero(k, features.cols());
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += features.row(i);
      ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    std::vector<int> empty;
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        empty.push_back(c);
      }
    }
    // empty clusters take the points currently farthest from their centroid
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int c : empty) {
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        const double d = (features.row(i) - centroids.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      taken[static_cast<std::size_t>(far)] = true;
      centroids.row(c) = features.row(far);
    }

    const auto [changed, next] = assign_all();
    ++result.iterations;
    assert(next <= objective * (1.0 + 1e-12) + 1e-300);
    result.objective_history.push_back(next);
    const double prev = objective;
    objective = next;
    if (!changed && empty.empty()) break;
    if (prev <= 0.0 || (prev - next) / prev < cfg.tol) break;
  }

  result.centroids = std::move(centroids);
  return result;
}

PrototypeStore build_initial_prototypes(const EmbeddingDataset& train, const KMeansConfig& cfg,
                                        const StoreConfig& store_cfg) {
  if (train.empty()) throw Error(ErrorKind::EmptyDataset, "training split is empty");
  if (train.classes.empty()) throw Error(ErrorKind::InvalidConfig, "dataset declares no classes");
  PrototypeStore store(train.dim, store_cfg);

  for (const auto& label : train.classes) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < train.records.size(); ++i) {
      if (train.records[i].label.id == label.id) rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (rows.empty()) {
      throw Error(ErrorKind::EmptyInput, "class '" + label.name + "' (id " + std::to_string(label.id) +
                                             ") has no training samples");
    }
    RowMatrix<double> features(static_cast<Eigen::Index>(rows.size()), train.dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      features.row(static_cast<Eigen::Index>(r)) = train.embeddings.row(rows[r]).cast<double>();
    }
    KMeansConfig class_cfg = cfg;
    // per-class stream so results do not depend on which classes precede it
    class_cfg.seed = cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(label.id + 1);
    const auto clustered = kmeans(features, class_cfg);
    for (Eigen::Index c = 0; c < clustered.centroids.rows(); ++c) {
      store.insert(label, Embedding(clustered.centroids.row(c).transpose()), Source::Server);
    }
  }
  return store;
}

}  // namespace protocorrect
