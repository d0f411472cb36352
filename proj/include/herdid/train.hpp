#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "herdid/batching.hpp"
#include "herdid/head.hpp"
#include "herdid/objective.hpp"
#include "herdid/optim.hpp"
#include "herdid/store.hpp"

namespace herdid {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t frames_per_batch = 2;
  LossParams loss = LossParams::bce();
  std::uint64_t seed = 0;
  SgdConfig sgd;
  /// Calls `on_progress` every this many batches (0 disables).
  std::size_t eval_every = 0;
  std::function<void(std::size_t step, const ProjectionHead<float>&)> on_progress;

  // Supervised baseline only.
  std::size_t train_frames = 1000;
  std::size_t val_frames = 200;
  std::size_t patience = 10;
};

void validate(const TrainConfig& config);

struct LogRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double t = 0.0;
  double b = 0.0;

  bool operator==(const LogRecord&) const = default;
};

void write_log_jsonl(std::ostream& out, const std::vector<LogRecord>& log);

struct TrainResult {
  std::vector<LogRecord> log;
  LossParams loss;
  SgdOptimizer optimizer;
};

/// Self-supervised training: per batch, sample K frames, project both views
/// (TRAIN mode), build the Hungarian pseudo-label mask, take the loss and
/// its gradients, backpropagate and step SGD. Labels are unreachable
/// through UnlabeledView.
TrainResult train_selfsup(const UnlabeledView& data, ProjectionHead<float>& head,
                          const TrainConfig& config);

/// Affine 64 -> N_ID classifier appended for the supervised baseline.
struct Classifier {
  Eigen::MatrixXf weight;  // (N_ID, 64)
  Eigen::VectorXf bias;

  static Classifier init(std::size_t classes, std::uint64_t seed);
  Eigen::MatrixXf logits(const Eigen::MatrixXf& features) const;
};

struct FrameSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Random disjoint split of the frames that have detections, by frame.
FrameSplit split_frames(const EmbeddingDataset& dataset, std::size_t train_frames,
                        std::size_t val_frames, std::uint64_t seed);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct SupervisedResult {
  Classifier classifier;
  FrameSplit split;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<LogRecord> log;
};

/// Cross-entropy baseline with the same head, batch construction and
/// optimizer. Early-stops once validation loss has not improved for
/// `patience` epochs; `head` and the classifier are restored to the best
/// validation epoch. Throws Error(kConfig) when labels are missing.
SupervisedResult train_supervised(const EmbeddingDataset& dataset, ProjectionHead<float>& head,
                                  const TrainConfig& config);

/// Mean cross-entropy over every stored view of the given records (EVAL mode).
double cross_entropy(const EmbeddingDataset& dataset, const ProjectionHead<float>& head,
                     const Classifier& classifier, const std::vector<std::size_t>& records);

/// argmax of view-averaged logits per record.
std::vector<std::size_t> predict(const EmbeddingDataset& dataset, const ProjectionHead<float>& head,
                                 const Classifier& classifier,
                                 const std::vector<std::size_t>& records);

/// Records belonging to the given frame positions, in order.
std::vector<std::size_t> records_of(const EmbeddingDataset& dataset,
                                    const std::vector<std::size_t>& frames);

}  // namespace herdid
