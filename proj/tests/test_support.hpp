#pragma once

// Independent oracles and fixtures shared by the unit and acceptance suites.
// Nothing here calls into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "herdid/rng.hpp"
#include "herdid/store.hpp"

namespace herdid::testing {

/// Best total over all injective maps from the shorter side into the longer
/// one, by exhaustive enumeration.
inline double brute_force_max_assignment(const Eigen::MatrixXd& m) {
  const bool flip = m.rows() > m.cols();
  const Eigen::MatrixXd a = flip ? Eigen::MatrixXd(m.transpose()) : m;
  const auto n = static_cast<std::size_t>(a.rows());
  const auto k = static_cast<std::size_t>(a.cols());
  std::vector<std::size_t> cols(k);
  std::iota(cols.begin(), cols.end(), 0);
  double best = -std::numeric_limits<double>::infinity();
  // Every permutation of all columns; the first n entries give one
  // injective selection (duplicates are harmless for a max).
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) total += a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols[r]));
    best = std::max(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

/// Max over all permutations p of sum_c counts[c][p(c)].
inline std::uint64_t brute_force_matched(const std::vector<std::vector<std::uint64_t>>& counts) {
  std::vector<std::size_t> perm(counts.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::uint64_t best = 0;
  do {
    std::uint64_t total = 0;
    for (std::size_t c = 0; c < perm.size(); ++c) total += counts[c][perm[c]];
    best = std::max(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1.0,
                                     double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

/// Central finite differences of f over every coordinate of x.
inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          Eigen::VectorXd x, double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + h;
    const double up = f(x);
    x(i) = keep - h;
    const double down = f(x);
    x(i) = keep;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

/// Central finite differences at the listed coordinates only. f may read
/// x by reference; x is restored before returning. points = 2 is the usual
/// (f(x+h) - f(x-h)) / 2h; points = 4 is the fourth-order stencil
/// (8(f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / 12h, which tolerates a larger
/// h and so loses less to cancellation when the derivative is small.
inline Eigen::VectorXd central_difference_at(const std::function<double()>& f, Eigen::Ref<Eigen::VectorXd> x,
                                             const std::vector<Eigen::Index>& coords, double h, int points = 2) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const Eigen::Index i = coords[k];
    const double keep = x(i);
    auto at = [&](double step) {
      x(i) = keep + step;
      return f();
    };
    double d = 0.0;
    if (points == 4) {
      // Symmetric pairs first, so a flat f gives exactly 0.
      const double near = at(h) - at(-h);
      const double far = at(2 * h) - at(-2 * h);
      d = (8.0 * near - far) / (12.0 * h);
    } else {
      d = (at(h) - at(-h)) / (2.0 * h);
    }
    x(i) = keep;
    g(static_cast<Eigen::Index>(k)) = d;
  }
  return g;
}

/// Up to `count` distinct coordinates from [offset, offset + size).
inline std::vector<Eigen::Index> sample_coords(Eigen::Index offset, Eigen::Index size, std::size_t count, Rng& rng) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(size));
  std::iota(all.begin(), all.end(), offset);
  if (all.size() > count) {
    rng.shuffle(all.begin(), all.end());
    all.resize(count);
    std::sort(all.begin(), all.end());
  }
  return all;
}

/// Norm-wise relative error |a - b| / max(|b|, floor).
inline double relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric,
                             double floor = 1e-12) {
  return (analytic - numeric).norm() / std::max(numeric.norm(), floor);
}

inline double relative_error(double analytic, double numeric, double floor = 1e-12) {
  return std::abs(analytic - numeric) / std::max(std::abs(numeric), floor);
}

/// Hand-built dataset: frame f holds sizes[f] detections with identity
/// labels 0..sizes[f]-1 and random unit views.
inline EmbeddingDataset toy_dataset(const std::vector<std::size_t>& sizes, std::uint32_t dim,
                                    std::uint32_t views, std::uint64_t seed,
                                    std::optional<std::uint32_t> n_ids = std::nullopt) {
  Rng rng(seed);
  std::vector<DetectionRecord> records;
  std::size_t max_size = 0;
  for (std::size_t f = 0; f < sizes.size(); ++f) {
    max_size = std::max(max_size, sizes[f]);
    for (std::size_t d = 0; d < sizes[f]; ++d) {
      DetectionRecord r;
      r.frame_id = f;
      r.detection_idx = static_cast<std::uint32_t>(d);
      r.gt_label = static_cast<std::int32_t>(d);
      for (std::size_t k = 0; k < std::size_t{dim} * views; ++k) {
        r.views.push_back(static_cast<float>(rng.normal()));
      }
      records.push_back(std::move(r));
    }
  }
  if (!n_ids) n_ids = static_cast<std::uint32_t>(std::max<std::size_t>(max_size, 1));
  return EmbeddingDataset(dim, views, n_ids, std::move(records));
}

}  // namespace herdid::testing
