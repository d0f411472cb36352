#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "herdid/head.hpp"
#include "herdid/objective.hpp"
#include "herdid/optim.hpp"
#include "herdid/train.hpp"

namespace herdid {

struct OptimizerSnapshot {
  std::size_t step = 0;
  std::size_t total_steps = 0;
  double base_lr = 0.0;
  SgdConfig sgd;
  std::vector<std::vector<float>> velocities;
  double t_velocity = 0.0;
  double b_velocity = 0.0;

  static OptimizerSnapshot of(const SgdOptimizer& optimizer);
  bool operator==(const OptimizerSnapshot&) const = default;
};

/// Everything needed to resume or run inference: head parameters and
/// running statistics, loss scalars, optimizer state and, for the
/// supervised baseline, the appended classifier.
struct Checkpoint {
  ProjectionHead<float> head;
  LossParams loss;
  OptimizerSnapshot optimizer;
  std::optional<Classifier> classifier;
};

/// HERDCKP1, little-endian:
///   "HERDCKP\x01" | u32 version=1 | u32 input_dim | u32 loss variant | u32 reserved
///   | f64 tau | f64 t | f64 b | f64 t_min | f64 t_max
///   | u64 n_params | n_params x f32
///   | 3 x (u32 width | width x f32 running mean | width x f32 running var)
///   | u64 step | u64 total_steps | f64 base_lr | f64 momentum | f64 weight_decay
///   | u32 blocks | blocks x (u64 n | n x f32 velocity) | f64 t velocity | f64 b velocity
///   | u32 classes (0 = none) | classes*64 x f32 weight (row-major) | classes x f32 bias
std::uint64_t write_checkpoint(const Checkpoint& checkpoint, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace herdid
