#include "herdid/cluster.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <string>
#include <thread>

#include "herdid/error.hpp"
#include "herdid/rng.hpp"

namespace herdid {
namespace {

constexpr Eigen::Index kEmbedChunk = 4096;

Eigen::MatrixXd project_views(const EmbeddingDataset& dataset, const ProjectionHead<float>& head) {
  const auto views = static_cast<Eigen::Index>(dataset.views_per_detection());
  const auto dim = static_cast<Eigen::Index>(dataset.embedding_dim());
  const auto total = static_cast<Eigen::Index>(dataset.size()) * views;
  Eigen::MatrixXd out(total, kOutputWidth);
  Eigen::MatrixXf chunk;
  for (Eigen::Index start = 0; start < total; start += kEmbedChunk) {
    const Eigen::Index rows = std::min(kEmbedChunk, total - start);
    chunk.resize(rows, dim);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto record = static_cast<std::size_t>((start + r) / views);
      const auto v = static_cast<std::size_t>((start + r) % views);
      const auto src = dataset.view(record, v);
      chunk.row(r) = Eigen::Map<const Eigen::RowVectorXf>(src.data(), dim);
    }
    out.middleRows(start, rows) = head.infer(chunk).cast<double>();
  }
  for (Eigen::Index r = 0; r < total; ++r) {
    const double norm = out.row(r).norm();
    if (norm > 0.0) out.row(r) /= norm;
  }
  return out;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double squared_distance(const RowMatrix& points, Eigen::Index p, const RowMatrix& centers,
                        Eigen::Index c) {
  return (points.row(p) - centers.row(c)).squaredNorm();
}

RowMatrix seed_plus_plus(const RowMatrix& points, std::size_t k, Rng& rng) {
  const Eigen::Index m = points.rows();
  RowMatrix centers(static_cast<Eigen::Index>(k), points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m))));
  Eigen::VectorXd closest(m);
  for (Eigen::Index p = 0; p < m; ++p) closest(p) = squared_distance(points, p, centers, 0);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = closest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = m - 1;
      for (Eigen::Index p = 0; p < m; ++p) {
        acc += closest(p);
        if (acc > target && closest(p) > 0.0) {
          pick = p;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m)));
    }
    const auto ci = static_cast<Eigen::Index>(c);
    centers.row(ci) = points.row(pick);
    for (Eigen::Index p = 0; p < m; ++p) {
      closest(p) = std::min(closest(p), squared_distance(points, p, centers, ci));
    }
  }
  return centers;
}

// Means of the current partition; empty clusters steal the point farthest
// from its center among clusters with more than one member.
RowMatrix update_centers(const RowMatrix& points, std::vector<std::size_t>& labels,
                               const RowMatrix& previous) {
  const Eigen::Index k = previous.rows();
  const Eigen::Index m = points.rows();
  while (true) {
    RowMatrix sums = RowMatrix::Zero(k, points.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index p = 0; p < m; ++p) {
      sums.row(static_cast<Eigen::Index>(labels[static_cast<std::size_t>(p)])) += points.row(p);
      ++counts[labels[static_cast<std::size_t>(p)]];
    }
    std::size_t empty = counts.size();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] == 0) {
        empty = c;
        break;
      }
    }
    RowMatrix centers = previous;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      }
    }
    if (empty == counts.size()) return centers;

    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index p = 0; p < m; ++p) {
      const auto c = labels[static_cast<std::size_t>(p)];
      if (counts[c] < 2) continue;
      const double d = squared_distance(points, p, centers, static_cast<Eigen::Index>(c));
      if (d > far_d) {
        far_d = d;
        far = p;
      }
    }
    labels[static_cast<std::size_t>(far)] = empty;
  }
}

// Nearest center for every point from one GEMM:
// |x - c|^2 = |x|^2 - 2 x.c + |c|^2. Exact-tie and near-tie candidates are
// re-checked with direct distances so the result matches nearest().
void assign_all(const RowMatrix& points, const Eigen::VectorXd& point_sq,
                const RowMatrix& centers, std::vector<std::size_t>& labels, bool keep_on_tie,
                bool* changed) {
  const RowMatrix cross = points * centers.transpose();
  const Eigen::RowVectorXd center_sq = centers.rowwise().squaredNorm().transpose();
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    Eigen::Index best = 0;
    (center_sq - 2.0 * cross.row(p)).minCoeff(&best);
    auto label = static_cast<std::size_t>(best);
    // Confirm against exact distances (the expansion can misorder near ties).
    double best_d = squared_distance(points, p, centers, best);
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double approx = point_sq(p) + center_sq(c) - 2.0 * cross(p, c);
      if (c == best || approx > best_d + 1e-9 * (1.0 + best_d)) continue;
      const double d = squared_distance(points, p, centers, c);
      if (d < best_d || (d == best_d && static_cast<std::size_t>(c) < label)) {
        best_d = d;
        label = static_cast<std::size_t>(c);
      }
    }
    auto& current = labels[static_cast<std::size_t>(p)];
    if (keep_on_tie && label != current &&
        !(best_d < squared_distance(points, p, centers, static_cast<Eigen::Index>(current)))) {
      continue;
    }
    if (label != current && changed) *changed = true;
    current = label;
  }
}

double row_inertia(const RowMatrix& points, const std::vector<std::size_t>& assignments,
                   const RowMatrix& centers) {
  double total = 0.0;
  for (Eigen::Index p = 0; p < points.rows(); ++p) {
    total += squared_distance(points, p, centers,
                              static_cast<Eigen::Index>(assignments[static_cast<std::size_t>(p)]));
  }
  return total;
}

ClusterResult lloyd(const RowMatrix& points, const Eigen::VectorXd& point_sq, std::size_t k,
                    std::size_t max_iterations, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::Index m = points.rows();
  ClusterResult run;
  RowMatrix centers = seed_plus_plus(points, k, rng);
  run.assignments.assign(static_cast<std::size_t>(m), 0);
  assign_all(points, point_sq, centers, run.assignments, false, nullptr);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    centers = update_centers(points, run.assignments, centers);
    run.inertia_history.push_back(row_inertia(points, run.assignments, centers));
    run.iterations = it + 1;
    // Keep the current label on exact ties so the loop reaches a fixpoint.
    bool changed = false;
    assign_all(points, point_sq, centers, run.assignments, true, &changed);
    if (!changed) break;
    if (it + 1 == max_iterations) {
      centers = update_centers(points, run.assignments, centers);
      run.inertia_history.push_back(row_inertia(points, run.assignments, centers));
    }
  }
  run.inertia = row_inertia(points, run.assignments, centers);
  run.centers = centers;
  return run;
}

}  // namespace

Eigen::MatrixXd embed_views(const EmbeddingDataset& dataset, const ProjectionHead<float>& head) {
  return project_views(dataset, head);
}

Eigen::MatrixXd embed_all(const EmbeddingDataset& dataset, const ProjectionHead<float>& head) {
  const Eigen::MatrixXd views = project_views(dataset, head);
  const auto v = static_cast<Eigen::Index>(dataset.views_per_detection());
  Eigen::MatrixXd pooled(static_cast<Eigen::Index>(dataset.size()), kOutputWidth);
  for (Eigen::Index r = 0; r < pooled.rows(); ++r) {
    Eigen::RowVectorXd mean = views.middleRows(r * v, v).colwise().mean();
    const double norm = mean.norm();
    if (norm > 0.0) mean /= norm;
    pooled.row(r) = mean;
  }
  return pooled;
}

double inertia_of(const Eigen::MatrixXd& points, const std::vector<std::size_t>& assignments,
                  const Eigen::MatrixXd& centers) {
  return row_inertia(points, assignments, centers);
}

ClusterResult kmeans(const Eigen::MatrixXd& points, const KMeansOptions& options) {
  require(options.k >= 1, ErrorKind::kConfig, "k must be >= 1");
  require(static_cast<std::size_t>(points.rows()) >= options.k, ErrorKind::kConfig,
          "kmeans needs at least k=" + std::to_string(options.k) + " points, got " +
              std::to_string(points.rows()));
  require(options.restarts >= 1 && options.max_iterations >= 1, ErrorKind::kConfig,
          "kmeans needs restarts >= 1 and max_iterations >= 1");
  require(points.allFinite(), ErrorKind::kData, "kmeans input has non-finite values");

  const RowMatrix rows = points;
  const Eigen::VectorXd point_sq = points.rowwise().squaredNorm();
  std::vector<ClusterResult> runs(options.restarts);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < runs.size(); r = next++) {
      runs[r] = lloyd(rows, point_sq, options.k, options.max_iterations, derive_seed(options.seed, r));
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, options.restarts);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r].inertia < runs[best].inertia) best = r;
  }
  ClusterResult result = std::move(runs[best]);
  result.best_restart = best;
  for (const auto& run : runs) result.restart_inertia.push_back(run.inertia);
  result.restart_inertia[best] = result.inertia;
  return result;
}

std::vector<std::size_t> majority_vote(const std::vector<std::size_t>& labels, std::size_t group,
                                       std::size_t k) {
  require(group >= 1 && labels.size() % group == 0, ErrorKind::kUsage,
          "label count is not a multiple of the group size");
  std::vector<std::size_t> out;
  std::vector<std::size_t> votes(k);
  for (std::size_t start = 0; start < labels.size(); start += group) {
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t i = start; i < start + group; ++i) ++votes.at(labels[i]);
    out.push_back(static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
  }
  return out;
}

}  // namespace herdid
