#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "herdid/rng.hpp"
#include "herdid/store.hpp"

namespace herdid {

/// Read access to a dataset's embeddings and frame structure with no way
/// to reach gt_label. The self-supervised trainer only ever sees this.
class UnlabeledView {
 public:
  explicit UnlabeledView(const EmbeddingDataset& dataset) : dataset_(&dataset) {}

  std::uint32_t embedding_dim() const { return dataset_->embedding_dim(); }
  std::uint32_t views_per_detection() const { return dataset_->views_per_detection(); }
  const std::vector<FrameRange>& frame_index() const { return dataset_->frame_index(); }
  std::size_t size() const { return dataset_->size(); }
  std::size_t max_detections_per_frame() const { return dataset_->max_detections_per_frame(); }
  std::uint32_t detection_idx(std::size_t record) const {
    return dataset_->records()[record].detection_idx;
  }
  std::span<const float> view(std::size_t record, std::size_t v) const {
    return dataset_->view(record, v);
  }

 private:
  const EmbeddingDataset* dataset_;
};

struct BatchSpec {
  std::size_t frames_per_batch = 2;
  std::uint64_t seed = 0;
};

struct RowProvenance {
  std::size_t frame_slot = 0;     // 0..K-1 within the batch
  std::size_t record = 0;         // index into the dataset's records
  std::uint32_t detection_idx = 0;
  int view_slot = 1;              // 1 or 2
  std::uint32_t stored_view = 0;  // which of the V stored views was used
};

/// Rows are [view-1 rows grouped by frame | view-2 rows in the same order],
/// so row i and row i + N/2 are two views of one detection.
struct TrainingBatch {
  Eigen::MatrixXf features;
  std::vector<RowProvenance> rows;
  std::vector<std::size_t> frame_sizes;  // detections per frame slot

  std::size_t size() const { return rows.size(); }
  std::size_t half() const { return rows.size() / 2; }
  /// Row offset of each frame slot inside one half.
  std::vector<std::size_t> frame_offsets() const;
};

/// Builds a batch from explicit positions into frame_index(). Two distinct
/// stored views are drawn per detection, in random order.
TrainingBatch assemble_batch(const UnlabeledView& data, std::span<const std::size_t> frames,
                             Rng& rng);

/// Stateful frame sampler. Each epoch visits the eligible frames (those with
/// at least one detection) in a fresh random order, K at a time; an epoch is
/// ceil(F_usable / K) batches and a short final group is topped up with
/// distinct frames drawn from the rest of the pool.
class BatchSampler {
 public:
  BatchSampler(const UnlabeledView& data, BatchSpec spec);
  /// Restricts sampling to the given frame positions (e.g. a training split).
  BatchSampler(const UnlabeledView& data, BatchSpec spec, std::vector<std::size_t> pool);

  TrainingBatch next();
  /// Frame positions (into frame_index()) of the next batch, advancing state.
  std::vector<std::size_t> next_frames();

  std::size_t batches_per_epoch() const;
  std::size_t usable_frames() const { return eligible_.size(); }

 private:
  void start_epoch();

  UnlabeledView data_;
  BatchSpec spec_;
  Rng rng_;
  std::vector<std::size_t> eligible_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace herdid
