#pragma once

#include <cstdint>

#include "herdid/store.hpp"

namespace herdid {

/// Synthetic herd video: N_ID unit-norm prototypes, per-frame appearance
/// drift (identity_noise_sigma) and per-view augmentation noise
/// (view_noise_sigma), each followed by re-normalization.
struct SimConfig {
  std::uint32_t n_identities = 8;
  std::uint32_t n_frames = 500;
  std::uint32_t embedding_dim = 512;
  std::uint32_t views_per_detection = 2;
  double identity_noise_sigma = 0.05;
  double view_noise_sigma = 0.1;
  double visibility_prob = 1.0;
  std::uint64_t seed = 0;
};

void validate(const SimConfig& config);

/// Deterministic in config.seed. Each frame draws from its own substream
/// derived from (seed, frame_id), so frames are order-independent.
EmbeddingDataset generate(const SimConfig& config);

}  // namespace herdid
