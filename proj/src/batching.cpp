#include "herdid/batching.hpp"

#include <algorithm>
#include <string>

#include "herdid/error.hpp"

namespace herdid {

std::vector<std::size_t> TrainingBatch::frame_offsets() const {
  std::vector<std::size_t> offsets(frame_sizes.size(), 0);
  for (std::size_t f = 1; f < frame_sizes.size(); ++f) {
    offsets[f] = offsets[f - 1] + frame_sizes[f - 1];
  }
  return offsets;
}

TrainingBatch assemble_batch(const UnlabeledView& data, std::span<const std::size_t> frames,
                             Rng& rng) {
  const auto& index = data.frame_index();
  const std::uint32_t views = data.views_per_detection();
  const Eigen::Index dim = data.embedding_dim();

  TrainingBatch batch;
  std::size_t detections = 0;
  for (std::size_t f : frames) {
    require(f < index.size(), ErrorKind::kUsage, "frame position out of range");
    batch.frame_sizes.push_back(index[f].size());
    detections += index[f].size();
  }
  const std::size_t half = detections;
  batch.rows.resize(2 * half);
  batch.features.resize(static_cast<Eigen::Index>(2 * half), dim);

  std::size_t row = 0;
  for (std::size_t slot = 0; slot < frames.size(); ++slot) {
    const auto& range = index[frames[slot]];
    for (std::size_t rec = range.begin; rec < range.end; ++rec, ++row) {
      const auto first = static_cast<std::uint32_t>(rng.below(views));
      auto second = static_cast<std::uint32_t>(rng.below(views - 1));
      if (second >= first) ++second;
      const std::uint32_t chosen[2] = {first, second};
      for (int v = 0; v < 2; ++v) {
        const std::size_t r = row + static_cast<std::size_t>(v) * half;
        batch.rows[r] = {slot, rec, data.detection_idx(rec), v + 1, chosen[v]};
        const auto src = data.view(rec, chosen[v]);
        batch.features.row(static_cast<Eigen::Index>(r)) =
            Eigen::Map<const Eigen::RowVectorXf>(src.data(), dim);
      }
    }
  }
  return batch;
}

BatchSampler::BatchSampler(const UnlabeledView& data, BatchSpec spec)
    : BatchSampler(data, spec, {}) {}

BatchSampler::BatchSampler(const UnlabeledView& data, BatchSpec spec, std::vector<std::size_t> pool)
    : data_(data), spec_(spec), rng_(spec.seed) {
  require(spec_.frames_per_batch >= 2, ErrorKind::kConfig, "frames per batch K must be >= 2");
  const auto& index = data_.frame_index();
  if (pool.empty()) {
    for (std::size_t f = 0; f < index.size(); ++f) pool.push_back(f);
  }
  for (std::size_t f : pool) {
    require(f < index.size(), ErrorKind::kUsage, "frame position out of range");
    if (index[f].size() > 0) eligible_.push_back(f);
  }
  require(eligible_.size() >= spec_.frames_per_batch, ErrorKind::kInsufficientData,
          "need at least " + std::to_string(spec_.frames_per_batch) +
              " frames with detections, dataset has " + std::to_string(eligible_.size()));
  start_epoch();
}

std::size_t BatchSampler::batches_per_epoch() const {
  return (eligible_.size() + spec_.frames_per_batch - 1) / spec_.frames_per_batch;
}

void BatchSampler::start_epoch() {
  order_ = eligible_;
  rng_.shuffle(order_.begin(), order_.end());
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next_frames() {
  if (cursor_ >= order_.size()) start_epoch();
  const std::size_t k = spec_.frames_per_batch;
  const std::size_t take = std::min(k, order_.size() - cursor_);
  std::vector<std::size_t> frames(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                  order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  while (frames.size() < k) {
    const std::size_t candidate = eligible_[rng_.below(eligible_.size())];
    if (std::find(frames.begin(), frames.end(), candidate) == frames.end()) {
      frames.push_back(candidate);
    }
  }
  return frames;
}

TrainingBatch BatchSampler::next() {
  const auto frames = next_frames();
  return assemble_batch(data_, frames, rng_);
}

}  // namespace herdid
