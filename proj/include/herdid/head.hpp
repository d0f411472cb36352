#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace herdid {

enum class Mode { kTrain, kEval };

inline constexpr std::array<Eigen::Index, 3> kHiddenWidths = {256, 128, 128};
inline constexpr Eigen::Index kOutputWidth = 64;

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Location of one parameter tensor inside the flat parameter vector.
/// Weights are stored row-major as (out, in).
struct TensorSlot {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Index size() const { return rows * cols; }
};

std::vector<TensorSlot> head_layout(Eigen::Index input_dim);

/// Gradient buffers in the same flat layout as the parameters.
template <class Scalar>
struct GradientSet {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;
  std::vector<TensorSlot> layout;

  const TensorSlot& slot(const std::string& name) const;
};

/// Projection MLP over frozen backbone embeddings:
///   Linear(D,256)+BN+ReLU, Linear(256,128)+BN+ReLU, Linear(128,128)+BN+ReLU,
///   Linear(128,64).
/// All trainable parameters live in one flat vector; batch-norm running
/// statistics are kept separately and are not trainable.
template <class Scalar>
class ProjectionHead {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstRowMajorMap =
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  ProjectionHead() = default;

  /// Fan-in-scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
  /// zero biases, BN scale 1 / shift 0, running mean 0 / var 1.
  static ProjectionHead init(Eigen::Index input_dim, std::uint64_t seed);

  static Eigen::Index parameter_count(Eigen::Index input_dim);

  Eigen::Index input_dim() const { return input_dim_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }
  const std::vector<TensorSlot>& layout() const { return layout_; }
  const TensorSlot& slot(const std::string& name) const;
  ConstRowMajorMap tensor(const std::string& name) const;
  RowMajorMap tensor(const std::string& name);

  /// Per batch-norm layer running mean and (biased) running variance.
  std::array<Vector, 3>& running_mean() { return running_mean_; }
  const std::array<Vector, 3>& running_mean() const { return running_mean_; }
  std::array<Vector, 3>& running_var() { return running_var_; }
  const std::array<Vector, 3>& running_var() const { return running_var_; }

  /// B x D -> B x 64. TRAIN mode uses batch statistics, updates running
  /// statistics and caches activations for backward(); EVAL mode defers to
  /// infer().
  Matrix forward(const Matrix& batch);

  /// EVAL-mode forward using running statistics. Never mutates state.
  Matrix infer(const Matrix& batch) const;

  /// Gradient of the scalar loss whose output-gradient is `upstream`
  /// (B x 64) with respect to every parameter, through the batch-statistic
  /// pathway of each batch norm. Requires a preceding TRAIN forward().
  GradientSet<Scalar> backward(const Matrix& upstream) const;

  /// Same as backward() but also returns dLoss/dInput.
  GradientSet<Scalar> backward(const Matrix& upstream, Matrix* input_grad) const;

  bool has_cache() const { return cache_.valid; }
  /// Cached batch-normalized (pre scale/shift) activations of hidden layer
  /// 0..2 from the last TRAIN forward().
  const Matrix& normalized_activations(std::size_t layer) const { return cache_.blocks.at(layer).xhat; }
  void clear_cache() { cache_ = {}; }

  template <class Other>
  ProjectionHead<Other> cast() const;

 private:
  template <class>
  friend class ProjectionHead;

  struct BlockCache {
    Matrix input;   // layer input
    Matrix xhat;    // normalized pre-activation
    Vector inv_std; // 1/sqrt(var + eps)
    Matrix out;     // post-ReLU
  };
  struct Cache {
    bool valid = false;
    std::array<BlockCache, 3> blocks;
  };

  Eigen::Index input_dim_ = 0;
  Mode mode_ = Mode::kTrain;
  std::vector<TensorSlot> layout_;
  Vector params_;
  std::array<Vector, 3> running_mean_;
  std::array<Vector, 3> running_var_;
  Cache cache_;
};

template <class Scalar>
template <class Other>
ProjectionHead<Other> ProjectionHead<Scalar>::cast() const {
  ProjectionHead<Other> out;
  out.input_dim_ = input_dim_;
  out.mode_ = mode_;
  out.layout_ = layout_;
  out.params_ = params_.template cast<Other>();
  for (std::size_t i = 0; i < 3; ++i) {
    out.running_mean_[i] = running_mean_[i].template cast<Other>();
    out.running_var_[i] = running_var_[i].template cast<Other>();
  }
  return out;
}

extern template class ProjectionHead<float>;
extern template class ProjectionHead<double>;

}  // namespace herdid
