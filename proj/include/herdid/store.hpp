#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace herdid {

inline constexpr std::int32_t kUnknownLabel = -1;

/// One bounding-boxed animal in one frame, with V stored view embeddings
/// laid out contiguously (view-major, V x D).
struct DetectionRecord {
  std::uint64_t frame_id = 0;
  std::uint32_t detection_idx = 0;
  std::int32_t gt_label = kUnknownLabel;
  std::vector<float> views;

  bool operator==(const DetectionRecord&) const = default;
};

struct FrameRange {
  std::uint64_t frame_id = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const FrameRange&) const = default;
};

/// All detections of one video. Records are kept sorted by
/// (frame_id, detection_idx); frame_index partitions them by frame.
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;

  /// Sorts, validates and indexes. Throws on any invariant violation.
  EmbeddingDataset(std::uint32_t embedding_dim, std::uint32_t views_per_detection,
                   std::optional<std::uint32_t> n_identities,
                   std::vector<DetectionRecord> records);

  std::uint32_t embedding_dim() const { return embedding_dim_; }
  std::uint32_t views_per_detection() const { return views_per_detection_; }
  std::optional<std::uint32_t> n_identities() const { return n_identities_; }
  const std::vector<DetectionRecord>& records() const { return records_; }
  const std::vector<FrameRange>& frame_index() const { return frame_index_; }
  std::size_t size() const { return records_.size(); }

  std::span<const float> view(std::size_t record, std::size_t v) const {
    return std::span<const float>(records_[record].views)
        .subspan(v * embedding_dim_, embedding_dim_);
  }

  bool has_all_labels() const;
  std::size_t max_detections_per_frame() const;

  /// Copy with every label replaced; used for label-poisoning checks.
  EmbeddingDataset with_labels(std::span<const std::int32_t> labels) const;

  bool operator==(const EmbeddingDataset&) const = default;

 private:
  std::uint32_t embedding_dim_ = 0;
  std::uint32_t views_per_detection_ = 0;
  std::optional<std::uint32_t> n_identities_;
  std::vector<DetectionRecord> records_;
  std::vector<FrameRange> frame_index_;
};

inline constexpr std::size_t kHeaderBytes = 32;

inline constexpr std::size_t record_bytes(std::uint32_t dim, std::uint32_t views) {
  return 8 + 4 + 4 + std::size_t{4} * dim * views;
}

/// HERDEMB1 container. Returns the number of bytes written.
std::uint64_t write_dataset(const EmbeddingDataset& dataset, std::ostream& out);
EmbeddingDataset read_dataset(std::istream& in);

std::uint64_t save_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& path);
EmbeddingDataset load_dataset(const std::filesystem::path& path);

}  // namespace herdid
