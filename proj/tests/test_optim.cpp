#include <cmath>
#include <numbers>

#include "doctest.h"
#include "herdid/error.hpp"
#include "herdid/optim.hpp"

using namespace herdid;

TEST_CASE("cosine schedule endpoints") {
  CHECK(lr_at(0, 100, 0.3) == 0.3);
  CHECK(lr_at(100, 100, 0.3) == 0.0);
  CHECK(lr_at(50, 100, 0.3) == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(lr_at(25, 100, 2.0) == doctest::Approx(1.0 + std::cos(std::numbers::pi / 4)).epsilon(1e-15));
}

TEST_CASE("cosine schedule is non-increasing") {
  for (std::size_t total : {1u, 7u, 1000u}) {
    double prev = lr_at(0, total, 0.5);
    for (std::size_t s = 1; s <= total; ++s) {
      const double lr = lr_at(s, total, 0.5);
      CHECK(lr <= prev);
      prev = lr;
    }
  }
}

TEST_CASE("schedule errors") {
  try {
    lr_at(0, 0, 0.1);
    FAIL("expected config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
  }
  CHECK_THROWS_AS(lr_at(11, 10, 0.1), Error);
}

TEST_CASE("batch-size learning-rate rule") {
  CHECK(scaled_base_lr(256) == doctest::Approx(0.3));
  CHECK(scaled_base_lr(40) == doctest::Approx(0.046875));
}

TEST_CASE("momentum recurrence") {
  std::vector<double> p{1.0}, v{0.0};
  const std::vector<double> g{1.0};
  sgd_momentum_update<double>(p, g, v, 0.1, SgdConfig{});
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(p[0] == doctest::Approx(0.9));
  sgd_momentum_update<double>(p, g, v, 0.1, SgdConfig{});
  CHECK(v[0] == doctest::Approx(1.9));
  CHECK(p[0] == doctest::Approx(0.71));
}

TEST_CASE("zero momentum is plain gradient descent") {
  std::vector<double> p{1.5, -2.0, 0.25}, v{0.0, 0.0, 0.0};
  const std::vector<double> g{0.3, -0.7, 1.1};
  const std::vector<double> before = p;
  for (int step = 0; step < 3; ++step) {
    const std::vector<double> prev = p;
    sgd_momentum_update<double>(p, g, v, 0.05, SgdConfig{0.0, 0.0});
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == prev[i] - 0.05 * g[i]);
  }
  CHECK(p != before);
}

TEST_CASE("zero gradients leave parameters bit-identical") {
  std::vector<float> p{1.0f, -3.25f, 7e-20f}, v(3, 0.0f);
  const std::vector<float> g(3, 0.0f);
  const auto before = p;
  for (int i = 0; i < 5; ++i) sgd_momentum_update<float>(p, g, v, 0.3, SgdConfig{});
  CHECK(p == before);
}

TEST_CASE("shape mismatch") {
  std::vector<float> p(3), v(3);
  const std::vector<float> g(2);
  try {
    sgd_momentum_update<float>(p, g, v, 0.1, SgdConfig{});
    FAIL("expected usage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUsage);
  }
  SgdOptimizer opt(SgdConfig{}, 0.1, 10, {3});
  CHECK_THROWS_AS(opt.update(0, p, g), Error);
  CHECK_THROWS_AS(opt.update(1, p, std::vector<float>(3)), Error);
}

TEST_CASE("learnable scale is clamped after the update") {
  SgdOptimizer opt(SgdConfig{}, 1.0, 10, {});
  auto params = LossParams::bce(99.5, -10.0);
  opt.update_scalars(params, -5.0, 0.0);
  CHECK(params.t == 100.0);
  CHECK(opt.t_velocity() == -5.0);

  auto low = LossParams::supcon_learnable(0.5);
  opt.update_scalars(low, 5.0, 0.0);
  CHECK(low.t == 0.0);
  CHECK(low.b == 0.0);

  // Fixed temperature never moves.
  auto fixed = LossParams::supcon_fixed(0.5);
  opt.update_scalars(fixed, 5.0, 5.0);
  CHECK(fixed.t == LossParams::supcon_fixed(0.5).t);
  CHECK(fixed.tau == 0.5);
}

TEST_CASE("optimizer steps through the schedule") {
  SgdOptimizer opt(SgdConfig{}, 0.4, 4, {2});
  std::vector<float> p{1.0f, 1.0f};
  const std::vector<float> g{1.0f, 0.0f};
  std::vector<double> lrs;
  for (int s = 0; s < 4; ++s) {
    lrs.push_back(opt.current_lr());
    opt.update(0, p, g);
    opt.finish_step();
  }
  CHECK(lrs[0] == 0.4);
  CHECK(lrs[2] == doctest::Approx(0.2));
  CHECK(opt.step() == 4);
  CHECK(opt.current_lr() == 0.0);
  CHECK(p[1] == 1.0f);
  CHECK(p[0] < 1.0f);
}
