#include "herdid/assign.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "herdid/error.hpp"

namespace herdid {

// Shortest augmenting path Hungarian method with row/column potentials,
// O(rows^2 * cols). Rows are added one at a time; each addition runs a
// Dijkstra-like search over columns on reduced costs.
std::vector<std::size_t> solve_min_cost(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  const auto m = static_cast<std::size_t>(cost.cols());
  require(n <= m, ErrorKind::kDimension, "solve_min_cost requires rows <= cols");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  // Index 0 of the column arrays is a virtual column; real columns are 1..m.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> row_of_col(m + 1, kNone), way(m + 1, 0);
  std::vector<double> min_slack(m + 1);
  std::vector<char> used(m + 1);

  for (std::size_t i = 0; i < n; ++i) {
    row_of_col[0] = i;
    std::size_t j0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of_col[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double reduced = cost(static_cast<Eigen::Index>(i0), static_cast<Eigen::Index>(j - 1)) -
                               u[i0 + 1] - v[j];
        if (reduced < min_slack[j]) {
          min_slack[j] = reduced;
          way[j] = j0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[row_of_col[j] + 1] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != kNone);
    do {
      const std::size_t j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> col_of_row(n, kNone);
  for (std::size_t j = 1; j <= m; ++j) {
    if (row_of_col[j] != kNone) col_of_row[row_of_col[j]] = j - 1;
  }
  return col_of_row;
}

namespace {

double assignment_total(const Eigen::MatrixXd& s, const std::vector<std::size_t>& cols) {
  double total = 0.0;
  for (std::size_t r = 0; r < cols.size(); ++r) {
    total += s(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols[r]));
  }
  return total;
}

// Best total for `scores` (rows <= cols) when rows 0..fixed.size()-1 are
// pinned to the given columns.
double best_total_with_prefix(const Eigen::MatrixXd& scores,
                              const std::vector<std::size_t>& fixed) {
  const Eigen::Index n = scores.rows();
  const Eigen::Index m = scores.cols();
  const auto k = static_cast<Eigen::Index>(fixed.size());
  double total = 0.0;
  std::vector<char> taken(static_cast<std::size_t>(m), 0);
  for (Eigen::Index r = 0; r < k; ++r) {
    total += scores(r, static_cast<Eigen::Index>(fixed[static_cast<std::size_t>(r)]));
    taken[fixed[static_cast<std::size_t>(r)]] = 1;
  }
  if (k == n) return total;
  Eigen::MatrixXd sub(n - k, m - k);
  Eigen::Index c_out = 0;
  for (Eigen::Index c = 0; c < m; ++c) {
    if (taken[static_cast<std::size_t>(c)]) continue;
    sub.col(c_out++) = -scores.col(c).tail(n - k);
  }
  const auto cols = solve_min_cost(sub);
  return total - assignment_total(sub, cols);
}

// Rows <= cols. Refines an optimal assignment to the lexicographically
// smallest optimal column sequence. Only columns below the current choice
// can improve the order, and each candidate is confirmed by re-solving the
// remaining rows.
std::vector<std::size_t> lexicographic_optimum(const Eigen::MatrixXd& scores,
                                               std::vector<std::size_t> cols, double optimum) {
  const double tol = 1e-12 * (1.0 + std::abs(optimum)) * static_cast<double>(scores.rows());
  std::vector<std::size_t> fixed;
  for (std::size_t r = 0; r < cols.size(); ++r) {
    std::size_t chosen = cols[r];
    for (std::size_t c = 0; c < cols[r]; ++c) {
      if (std::find(fixed.begin(), fixed.end(), c) != fixed.end()) continue;
      fixed.push_back(c);
      const double best = best_total_with_prefix(scores, fixed);
      fixed.pop_back();
      if (best >= optimum - tol) {
        chosen = c;
        break;
      }
    }
    fixed.push_back(chosen);
    if (chosen != cols[r]) {
      // Re-derive the tail so later rows stay consistent with the new prefix.
      const Eigen::Index n = scores.rows();
      const Eigen::Index m = scores.cols();
      const auto k = static_cast<Eigen::Index>(fixed.size());
      std::vector<std::size_t> free_cols;
      for (Eigen::Index c = 0; c < m; ++c) {
        if (std::find(fixed.begin(), fixed.end(), static_cast<std::size_t>(c)) == fixed.end()) {
          free_cols.push_back(static_cast<std::size_t>(c));
        }
      }
      if (k < n) {
        Eigen::MatrixXd sub(n - k, static_cast<Eigen::Index>(free_cols.size()));
        for (std::size_t c = 0; c < free_cols.size(); ++c) {
          sub.col(static_cast<Eigen::Index>(c)) =
              -scores.col(static_cast<Eigen::Index>(free_cols[c])).tail(n - k);
        }
        const auto tail = solve_min_cost(sub);
        for (std::size_t r2 = 0; r2 < tail.size(); ++r2) {
          cols[fixed.size() + r2] = free_cols[tail[r2]];
        }
      }
      cols[r] = chosen;
    }
  }
  return cols;
}

}  // namespace

Assignment solve_max(const Eigen::MatrixXd& scores) {
  require(scores.rows() >= 1 && scores.cols() >= 1, ErrorKind::kDimension,
          "assignment needs a non-empty matrix");
  require(scores.allFinite(), ErrorKind::kData, "assignment matrix has non-finite entries");

  const bool transposed = scores.rows() > scores.cols();
  const Eigen::MatrixXd oriented = transposed ? Eigen::MatrixXd(scores.transpose()) : scores;

  auto cols = solve_min_cost(-oriented);
  const double optimum = assignment_total(oriented, cols);
  cols = lexicographic_optimum(oriented, std::move(cols), optimum);

  Assignment result;
  for (std::size_t r = 0; r < cols.size(); ++r) {
    if (transposed) {
      result.pairs.emplace_back(cols[r], r);
    } else {
      result.pairs.emplace_back(r, cols[r]);
    }
    result.total += oriented(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cols[r]));
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  return result;
}

}  // namespace herdid
