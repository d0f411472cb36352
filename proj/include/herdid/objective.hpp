#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "herdid/batching.hpp"

namespace herdid {

/// Cosine similarities of a batch of projected features, plus what the
/// backward pass needs (unit rows and original norms).
struct SimilarityMatrix {
  Eigen::MatrixXd values;
  Eigen::MatrixXd unit_rows;
  Eigen::VectorXd norms;

  Eigen::Index size() const { return values.rows(); }
};

/// Rows are L2-normalized, then all pairwise dot products are taken.
/// Throws Error(kDegenerateFeature) on a zero row.
SimilarityMatrix similarity(const Eigen::MatrixXd& features);

/// Chain rule through the normalize-then-dot map: dLoss/dSim -> dLoss/dFeatures.
Eigen::MatrixXd similarity_backward(const SimilarityMatrix& sim, const Eigen::MatrixXd& d_sim);

enum class MaskLabel : std::int8_t { kDiscard = 0, kPositive = 1, kNegative = -1 };

class MaskMatrix {
 public:
  MaskMatrix() = default;
  explicit MaskMatrix(std::size_t n) : n_(n), labels_(n * n, MaskLabel::kNegative) {}

  std::size_t size() const { return n_; }
  MaskLabel operator()(std::size_t i, std::size_t j) const { return labels_[i * n_ + j]; }
  MaskLabel& operator()(std::size_t i, std::size_t j) { return labels_[i * n_ + j]; }
  std::size_t count(MaskLabel label) const;

  bool operator==(const MaskMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<MaskLabel> labels_;
};

/// Block layout of one batch: detections per frame slot within each half.
struct BatchLayout {
  std::vector<std::size_t> frame_sizes;

  static BatchLayout of(const TrainingBatch& batch) { return {batch.frame_sizes}; }
  std::size_t half() const;
};

/// Self-bootstrapped pseudo-label mask.
///
///  - main diagonal: DISCARD
///  - two views of the same crop: POSITIVE
///  - other same-frame pairs: NEGATIVE
///  - each cross-frame block (frame f view a) x (frame g view b), f < g:
///    Hungarian maximum-similarity matching marks POSITIVEs, the rest
///    NEGATIVE; the mirrored block receives the transposed matching.
MaskMatrix build_mask(const SimilarityMatrix& sim, const BatchLayout& layout);

inline MaskMatrix build_mask(const SimilarityMatrix& sim, const TrainingBatch& batch) {
  return build_mask(sim, BatchLayout::of(batch));
}

enum class LossVariant { kSupConFixed, kSupConLearnable, kBce };

/// Learnable loss scalars. `t` multiplies similarities for the learnable
/// SupCon and BCE variants (clamped to [t_min, t_max] after each update);
/// `b` is the BCE logit bias.
struct LossParams {
  LossVariant variant = LossVariant::kBce;
  double tau = 0.5;
  double t = 10.0;
  double b = -10.0;
  double t_min = 0.0;
  double t_max = 100.0;

  static LossParams supcon_fixed(double tau = 0.5);
  static LossParams supcon_learnable(double t = 14.0);
  static LossParams bce(double t = 10.0, double b = -10.0);

  bool learns_t() const { return variant != LossVariant::kSupConFixed; }
  bool learns_b() const { return variant == LossVariant::kBce; }
  void clamp();
  void validate() const;
};

struct LossResult {
  double loss = 0.0;
  Eigen::MatrixXd d_sim;
  double d_t = 0.0;
  double d_b = 0.0;
};

/// SupCon: mean over positives (i,j) of -log softmax_{k != i}(s * Sim_ik)[j],
/// with s = 1/tau (fixed) or s = t (learnable).
/// BCE: -(1/N^2) * sum_{i != j} log sigmoid(m_ij * (t * Sim_ij + b)),
/// m = +1 POSITIVE, -1 NEGATIVE, DISCARD omitted.
/// Throws Error(kEmptyPositive) for SupCon without positives.
LossResult loss_and_grads(const SimilarityMatrix& sim, const MaskMatrix& mask,
                          const LossParams& params);

}  // namespace herdid
