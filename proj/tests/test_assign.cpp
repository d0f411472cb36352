#include <set>

#include "doctest.h"
#include "herdid/assign.hpp"
#include "herdid/error.hpp"
#include "test_support.hpp"

using namespace herdid;
using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

namespace {

void check_structure(const Eigen::MatrixXd& m, const Assignment& a) {
  std::set<std::size_t> rows, cols;
  double total = 0.0;
  for (const auto& [r, c] : a.pairs) {
    rows.insert(r);
    cols.insert(c);
    total += m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  CHECK(a.pairs.size() == static_cast<std::size_t>(std::min(m.rows(), m.cols())));
  CHECK(rows.size() == a.pairs.size());
  CHECK(cols.size() == a.pairs.size());
  CHECK(total == doctest::Approx(a.total).epsilon(1e-12));
}

}  // namespace

TEST_CASE("worked examples") {
  Eigen::MatrixXd one(1, 1);
  one << 5;
  auto a = solve_max(one);
  CHECK(a.pairs == Pairs{{0, 0}});
  CHECK(a.total == 5.0);

  Eigen::MatrixXd two(2, 2);
  two << 2, 1, 1, 3;
  a = solve_max(two);
  CHECK(a.pairs == Pairs{{0, 0}, {1, 1}});
  CHECK(a.total == 5.0);

  Eigen::MatrixXd rect(2, 3);
  rect << 1, 9, 2, 8, 1, 3;
  a = solve_max(rect);
  CHECK(a.pairs == Pairs{{0, 1}, {1, 0}});
  CHECK(a.total == 17.0);

  a = solve_max(Eigen::MatrixXd(rect.transpose()));
  CHECK(a.pairs == Pairs{{0, 1}, {1, 0}});
  CHECK(a.total == 17.0);
}

TEST_CASE("agrees with brute force on random matrices") {
  Rng rng(2024);
  for (Eigen::Index rows = 1; rows <= 6; ++rows) {
    for (Eigen::Index cols = 1; cols <= 6; ++cols) {
      for (int trial = 0; trial < 30; ++trial) {
        const auto m = testing::random_matrix(rows, cols, rng);
        const auto a = solve_max(m);
        check_structure(m, a);
        CHECK(a.total == doctest::Approx(testing::brute_force_max_assignment(m)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("transposing a matrix with a unique optimum transposes the pairs") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto m = testing::random_matrix(3 + trial % 3, 4, rng);
    auto pairs = solve_max(m).pairs;
    auto flipped = solve_max(Eigen::MatrixXd(m.transpose())).pairs;
    for (auto& [r, c] : flipped) std::swap(r, c);
    std::sort(flipped.begin(), flipped.end());
    CHECK(pairs == flipped);
  }
}

TEST_CASE("adding a constant to a square matrix keeps the optimal assignment") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 2 + trial % 5;
    const auto m = testing::random_matrix(n, n, rng);
    const double shift = rng.uniform(-5.0, 5.0);
    const Eigen::MatrixXd shifted = m.array() + shift;
    const auto a = solve_max(m);
    const auto b = solve_max(shifted);
    CHECK(a.pairs == b.pairs);
    CHECK(b.total == doctest::Approx(testing::brute_force_max_assignment(shifted)).epsilon(1e-12));
  }
}

TEST_CASE("ties resolve to the lexicographically smallest assignment") {
  CHECK(solve_max(Eigen::MatrixXd::Zero(3, 3)).pairs == Pairs{{0, 0}, {1, 1}, {2, 2}});
  CHECK(solve_max(Eigen::MatrixXd::Ones(2, 4)).pairs == Pairs{{0, 0}, {1, 1}});
  CHECK(solve_max(Eigen::MatrixXd::Ones(4, 2)).pairs == Pairs{{0, 0}, {1, 1}});

  Eigen::MatrixXd m(3, 3);
  m << 1, 1, 0,
       1, 1, 0,
       0, 0, 1;
  CHECK(solve_max(m).pairs == Pairs{{0, 0}, {1, 1}, {2, 2}});

  Eigen::MatrixXd counts(2, 2);
  counts << 3, 3, 3, 3;
  CHECK(solve_max(counts).pairs == Pairs{{0, 0}, {1, 1}});
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(solve_max(Eigen::MatrixXd(0, 3)), Error);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
  bad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    solve_max(bad);
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kData);
  }
}
