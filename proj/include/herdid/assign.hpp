#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace herdid {

struct Assignment {
  /// (row, column) pairs sorted by row.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total = 0.0;
};

/// Maximum-weight rectangular assignment (Hungarian algorithm).
///
/// Selects min(rows, cols) pairs with distinct rows and distinct columns
/// maximizing the summed score. Among optimal assignments the one whose
/// column sequence (indexed by the shorter side, in ascending order) is
/// lexicographically smallest is returned, so results never depend on
/// incidental solver state.
///
/// Throws Error(kDimension) on an empty matrix and Error(kData) on any
/// non-finite entry.
Assignment solve_max(const Eigen::MatrixXd& scores);

/// Minimum-cost variant of the same solver (rows <= cols required).
/// Returns the column assigned to each row.
std::vector<std::size_t> solve_min_cost(const Eigen::MatrixXd& cost);

}  // namespace herdid
