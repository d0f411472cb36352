#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "herdid/head.hpp"
#include "herdid/store.hpp"

namespace herdid {

struct KMeansOptions {
  std::size_t k = 2;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
  std::size_t max_iterations = 300;
  /// Worker threads for restarts; the result does not depend on it.
  std::size_t threads = 1;
};

struct ClusterResult {
  std::vector<std::size_t> assignments;
  Eigen::MatrixXd centers;
  double inertia = 0.0;
  std::size_t iterations = 0;
  /// Inertia after every center update of the winning run.
  std::vector<double> inertia_history;
  /// Final inertia of every restart, by restart index.
  std::vector<double> restart_inertia;
  std::size_t best_restart = 0;
};

/// One pooled unit vector per detection: every stored view is projected
/// in EVAL mode, L2-normalized, averaged, and re-normalized.
Eigen::MatrixXd embed_all(const EmbeddingDataset& dataset, const ProjectionHead<float>& head);

/// Every stored view projected and L2-normalized; row r * V + v is view v
/// of record r.
Eigen::MatrixXd embed_views(const EmbeddingDataset& dataset, const ProjectionHead<float>& head);

/// k-means++ seeding, then Lloyd iterations until the assignment stops
/// changing or max_iterations is hit. Empty clusters take the point
/// farthest from its current center. Best of `restarts` by inertia, ties
/// to the lower restart index.
ClusterResult kmeans(const Eigen::MatrixXd& points, const KMeansOptions& options);

/// Per-group majority vote over consecutive runs of `group` labels; ties go
/// to the lowest cluster index.
std::vector<std::size_t> majority_vote(const std::vector<std::size_t>& labels, std::size_t group,
                                       std::size_t k);

/// Sum of squared distances from each point to its assigned center.
double inertia_of(const Eigen::MatrixXd& points, const std::vector<std::size_t>& assignments,
                  const Eigen::MatrixXd& centers);

}  // namespace herdid
