#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "herdid/objective.hpp"

namespace herdid {

/// Cosine annealing from base_lr at step 0 to 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, double base_lr);

/// 0.3 * batch / 256 learning-rate rule.
double scaled_base_lr(double nominal_batch);

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 0.0;

  bool operator==(const SgdConfig&) const = default;
};

/// v <- mu * v + (g + wd * p);  p <- p - lr * v.
template <class Scalar>
void sgd_momentum_update(std::span<Scalar> params, std::span<const Scalar> grads,
                         std::span<Scalar> velocity, double lr, const SgdConfig& config);

/// Optimizer state for one training run: one velocity buffer per
/// registered float block plus the two loss scalars, all sharing one
/// learning-rate schedule.
class SgdOptimizer {
 public:
  SgdOptimizer(SgdConfig config, double base_lr, std::size_t total_steps,
               std::vector<std::size_t> block_sizes);

  double current_lr() const { return lr_at(step_, total_steps_, base_lr_); }
  std::size_t step() const { return step_; }
  std::size_t total_steps() const { return total_steps_; }
  double base_lr() const { return base_lr_; }
  const SgdConfig& config() const { return config_; }

  /// Updates block `index` with the current learning rate.
  void update(std::size_t index, std::span<float> params, std::span<const float> grads);

  /// Updates t and b (when the variant learns them) and clamps t.
  void update_scalars(LossParams& params, double d_t, double d_b);

  /// Advances the schedule by one step.
  void finish_step();

  std::vector<std::vector<float>>& velocities() { return velocities_; }
  const std::vector<std::vector<float>>& velocities() const { return velocities_; }
  double& t_velocity() { return t_velocity_; }
  double& b_velocity() { return b_velocity_; }
  double t_velocity() const { return t_velocity_; }
  double b_velocity() const { return b_velocity_; }
  void set_step(std::size_t step) { step_ = step; }

 private:
  SgdConfig config_;
  double base_lr_;
  std::size_t total_steps_;
  std::size_t step_ = 0;
  std::vector<std::vector<float>> velocities_;
  double t_velocity_ = 0.0;
  double b_velocity_ = 0.0;
};

}  // namespace herdid
