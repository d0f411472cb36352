#include "herdid/store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <tuple>

#include "herdid/error.hpp"

namespace herdid {
namespace {

constexpr std::array<char, 8> kMagic = {'H', 'E', 'R', 'D', 'E', 'M', 'B', '\x01'};

static_assert(std::endian::native == std::endian::little,
              "HERDEMB1 I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    fail(ErrorKind::kLength, std::string("truncated HERDEMB1 stream while reading ") + what);
  }
  return value;
}

}  // namespace

EmbeddingDataset::EmbeddingDataset(std::uint32_t embedding_dim,
                                   std::uint32_t views_per_detection,
                                   std::optional<std::uint32_t> n_identities,
                                   std::vector<DetectionRecord> records)
    : embedding_dim_(embedding_dim),
      views_per_detection_(views_per_detection),
      n_identities_(n_identities),
      records_(std::move(records)) {
  require(embedding_dim_ >= 1, ErrorKind::kInvariant, "embedding dimension must be >= 1");
  require(views_per_detection_ >= 2, ErrorKind::kInvariant,
          "each detection needs at least 2 views, got " + std::to_string(views_per_detection_));
  require(!n_identities_ || *n_identities_ >= 1, ErrorKind::kInvariant,
          "n_identities must be >= 1 when known");

  const std::size_t floats = std::size_t{embedding_dim_} * views_per_detection_;
  for (const auto& r : records_) {
    require(r.views.size() == floats, ErrorKind::kInvariant,
            "record view payload does not match V x D");
    for (float x : r.views) {
      require(std::isfinite(x), ErrorKind::kData, "non-finite embedding component");
    }
    if (r.gt_label != kUnknownLabel) {
      require(r.gt_label >= 0, ErrorKind::kInvariant, "negative gt_label other than -1");
      require(!n_identities_ || static_cast<std::uint32_t>(r.gt_label) < *n_identities_,
              ErrorKind::kInvariant, "gt_label outside 0..N_ID-1");
    }
  }

  std::stable_sort(records_.begin(), records_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.frame_id, a.detection_idx) < std::tie(b.frame_id, b.detection_idx);
  });
  for (std::size_t i = 1; i < records_.size(); ++i) {
    if (records_[i].frame_id == records_[i - 1].frame_id &&
        records_[i].detection_idx == records_[i - 1].detection_idx) {
      fail(ErrorKind::kDuplicateRecord,
           "duplicate record (frame " + std::to_string(records_[i].frame_id) + ", detection " +
               std::to_string(records_[i].detection_idx) + ")");
    }
  }

  for (std::size_t i = 0; i < records_.size();) {
    std::size_t j = i;
    while (j < records_.size() && records_[j].frame_id == records_[i].frame_id) ++j;
    frame_index_.push_back({records_[i].frame_id, i, j});
    if (n_identities_) {
      require(j - i <= *n_identities_, ErrorKind::kInvariant,
              "frame " + std::to_string(records_[i].frame_id) + " has more detections than N_ID");
    }
    i = j;
  }
}

bool EmbeddingDataset::has_all_labels() const {
  return std::all_of(records_.begin(), records_.end(),
                     [](const auto& r) { return r.gt_label != kUnknownLabel; });
}

std::size_t EmbeddingDataset::max_detections_per_frame() const {
  std::size_t best = 0;
  for (const auto& f : frame_index_) best = std::max(best, f.size());
  return best;
}

EmbeddingDataset EmbeddingDataset::with_labels(std::span<const std::int32_t> labels) const {
  require(labels.size() == records_.size(), ErrorKind::kUsage, "label count mismatch");
  EmbeddingDataset copy = *this;
  for (std::size_t i = 0; i < labels.size(); ++i) copy.records_[i].gt_label = labels[i];
  return copy;
}

std::uint64_t write_dataset(const EmbeddingDataset& dataset, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, dataset.embedding_dim());
  put<std::uint32_t>(out, dataset.views_per_detection());
  put<std::uint32_t>(out, dataset.n_identities().value_or(0));
  put<std::uint32_t>(out, 0);
  put<std::uint64_t>(out, dataset.size());
  for (const auto& r : dataset.records()) {
    put<std::uint64_t>(out, r.frame_id);
    put<std::uint32_t>(out, r.detection_idx);
    put<std::int32_t>(out, r.gt_label);
    out.write(reinterpret_cast<const char*>(r.views.data()),
              static_cast<std::streamsize>(r.views.size() * sizeof(float)));
  }
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing HERDEMB1 stream");
  return kHeaderBytes +
         dataset.size() * record_bytes(dataset.embedding_dim(), dataset.views_per_detection());
}

EmbeddingDataset read_dataset(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    fail(ErrorKind::kFormat, "bad magic: not a HERDEMB1 file");
  }
  const auto dim = get<std::uint32_t>(in, "header");
  const auto views = get<std::uint32_t>(in, "header");
  const auto n_id = get<std::uint32_t>(in, "header");
  const auto reserved = get<std::uint32_t>(in, "header");
  const auto count = get<std::uint64_t>(in, "header");
  require(reserved == 0, ErrorKind::kFormat, "reserved header field must be 0");
  require(views >= 2, ErrorKind::kInvariant,
          "each detection needs at least 2 views, got " + std::to_string(views));
  require(dim >= 1, ErrorKind::kInvariant, "embedding dimension must be >= 1");

  // A corrupt count must not drive a huge up-front allocation.
  constexpr std::uint64_t kReserveCap = 1 << 16;
  std::vector<DetectionRecord> records;
  records.reserve(static_cast<std::size_t>(std::min(count, kReserveCap)));
  const std::size_t floats = std::size_t{dim} * views;
  for (std::uint64_t i = 0; i < count; ++i) {
    DetectionRecord r;
    r.frame_id = get<std::uint64_t>(in, "record");
    r.detection_idx = get<std::uint32_t>(in, "record");
    r.gt_label = get<std::int32_t>(in, "record");
    r.views.resize(floats);
    in.read(reinterpret_cast<char*>(r.views.data()),
            static_cast<std::streamsize>(floats * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(floats * sizeof(float))) {
      fail(ErrorKind::kLength, "truncated HERDEMB1 stream: record " + std::to_string(i) +
                                   " of " + std::to_string(count));
    }
    records.push_back(std::move(r));
  }
  require(in.peek() == std::char_traits<char>::eof(), ErrorKind::kLength,
          "HERDEMB1 stream has bytes past the last record");
  std::optional<std::uint32_t> identities;
  if (n_id != 0) identities = n_id;
  return EmbeddingDataset(dim, views, identities, std::move(records));
}

std::uint64_t save_dataset(const EmbeddingDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  return write_dataset(dataset, out);
}

EmbeddingDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace herdid
