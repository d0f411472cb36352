#include "herdid/optim.hpp"

#include <cmath>
#include <numbers>

#include "herdid/error.hpp"

namespace herdid {

double lr_at(std::size_t step, std::size_t total_steps, double base_lr) {
  require(total_steps > 0, ErrorKind::kConfig, "cosine schedule needs total_steps > 0");
  require(step <= total_steps, ErrorKind::kUsage, "schedule step past total_steps");
  if (step == total_steps) return 0.0;
  const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

double scaled_base_lr(double nominal_batch) { return 0.3 * nominal_batch / 256.0; }

template <class Scalar>
void sgd_momentum_update(std::span<Scalar> params, std::span<const Scalar> grads,
                         std::span<Scalar> velocity, double lr, const SgdConfig& config) {
  require(params.size() == grads.size() && params.size() == velocity.size(), ErrorKind::kUsage,
          "parameter, gradient and velocity sizes differ");
  const auto mu = static_cast<Scalar>(config.momentum);
  const auto wd = static_cast<Scalar>(config.weight_decay);
  const auto eta = static_cast<Scalar>(lr);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Scalar g = grads[i];
    if (wd != Scalar(0)) g += wd * params[i];
    velocity[i] = mu * velocity[i] + g;
    params[i] -= eta * velocity[i];
  }
}

template void sgd_momentum_update<float>(std::span<float>, std::span<const float>,
                                         std::span<float>, double, const SgdConfig&);
template void sgd_momentum_update<double>(std::span<double>, std::span<const double>,
                                          std::span<double>, double, const SgdConfig&);

SgdOptimizer::SgdOptimizer(SgdConfig config, double base_lr, std::size_t total_steps,
                           std::vector<std::size_t> block_sizes)
    : config_(config), base_lr_(base_lr), total_steps_(total_steps) {
  require(total_steps_ > 0, ErrorKind::kConfig, "optimizer needs total_steps > 0");
  require(std::isfinite(base_lr_) && base_lr_ > 0.0, ErrorKind::kConfig,
          "base learning rate must be > 0");
  for (auto n : block_sizes) velocities_.emplace_back(n, 0.0f);
}

void SgdOptimizer::update(std::size_t index, std::span<float> params,
                          std::span<const float> grads) {
  require(index < velocities_.size(), ErrorKind::kUsage, "unknown parameter block");
  sgd_momentum_update<float>(params, grads, velocities_[index], current_lr(), config_);
}

void SgdOptimizer::update_scalars(LossParams& params, double d_t, double d_b) {
  const double lr = current_lr();
  if (params.learns_t()) {
    sgd_momentum_update<double>(std::span<double>(&params.t, 1), std::span<const double>(&d_t, 1),
                                std::span<double>(&t_velocity_, 1), lr, config_);
  }
  if (params.learns_b()) {
    sgd_momentum_update<double>(std::span<double>(&params.b, 1), std::span<const double>(&d_b, 1),
                                std::span<double>(&b_velocity_, 1), lr, config_);
  }
  params.clamp();
}

void SgdOptimizer::finish_step() {
  if (step_ < total_steps_) ++step_;
}

}  // namespace herdid
