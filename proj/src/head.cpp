#include "herdid/head.hpp"

#include <cmath>

#include "herdid/error.hpp"
#include "herdid/rng.hpp"

namespace herdid {
namespace {

const char* const kLinear[] = {"fc1", "fc2", "fc3", "fc4"};
const char* const kNorm[] = {"bn1", "bn2", "bn3"};

const TensorSlot& find_slot(const std::vector<TensorSlot>& layout, const std::string& name) {
  for (const auto& s : layout) {
    if (s.name == name) return s;
  }
  fail(ErrorKind::kUsage, "no parameter tensor named " + name);
}

}  // namespace

std::vector<TensorSlot> head_layout(Eigen::Index input_dim) {
  std::vector<TensorSlot> layout;
  Eigen::Index offset = 0;
  auto add = [&](std::string name, Eigen::Index rows, Eigen::Index cols) {
    layout.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  Eigen::Index fan_in = input_dim;
  for (std::size_t l = 0; l < 3; ++l) {
    const Eigen::Index width = kHiddenWidths[l];
    add(std::string(kLinear[l]) + ".weight", width, fan_in);
    add(std::string(kLinear[l]) + ".bias", 1, width);
    add(std::string(kNorm[l]) + ".weight", 1, width);
    add(std::string(kNorm[l]) + ".bias", 1, width);
    fan_in = width;
  }
  add("fc4.weight", kOutputWidth, fan_in);
  add("fc4.bias", 1, kOutputWidth);
  return layout;
}

template <class Scalar>
const TensorSlot& GradientSet<Scalar>::slot(const std::string& name) const {
  return find_slot(layout, name);
}

template <class Scalar>
ProjectionHead<Scalar> ProjectionHead<Scalar>::init(Eigen::Index input_dim, std::uint64_t seed) {
  require(input_dim >= 1, ErrorKind::kConfig, "head input dimension must be >= 1");
  ProjectionHead head;
  head.input_dim_ = input_dim;
  head.layout_ = head_layout(input_dim);
  head.params_ = Vector::Zero(parameter_count(input_dim));

  Rng rng(seed);
  for (const auto& s : head.layout_) {
    auto t = head.tensor(s.name);
    const bool is_weight = s.name.ends_with(".weight");
    if (s.name.starts_with("fc") && is_weight) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.cols));
      for (Eigen::Index r = 0; r < s.rows; ++r) {
        for (Eigen::Index c = 0; c < s.cols; ++c) {
          t(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
        }
      }
    } else if (s.name.starts_with("bn") && is_weight) {
      t.setOnes();
    }
  }
  for (std::size_t l = 0; l < 3; ++l) {
    head.running_mean_[l] = Vector::Zero(kHiddenWidths[l]);
    head.running_var_[l] = Vector::Ones(kHiddenWidths[l]);
  }
  return head;
}

template <class Scalar>
Eigen::Index ProjectionHead<Scalar>::parameter_count(Eigen::Index input_dim) {
  const auto layout = head_layout(input_dim);
  return layout.back().offset + layout.back().size();
}

template <class Scalar>
const TensorSlot& ProjectionHead<Scalar>::slot(const std::string& name) const {
  return find_slot(layout_, name);
}

template <class Scalar>
typename ProjectionHead<Scalar>::ConstRowMajorMap ProjectionHead<Scalar>::tensor(
    const std::string& name) const {
  const auto& s = slot(name);
  return ConstRowMajorMap(params_.data() + s.offset, s.rows, s.cols);
}

template <class Scalar>
typename ProjectionHead<Scalar>::RowMajorMap ProjectionHead<Scalar>::tensor(
    const std::string& name) {
  const auto& s = slot(name);
  return RowMajorMap(params_.data() + s.offset, s.rows, s.cols);
}

template <class Scalar>
typename ProjectionHead<Scalar>::Matrix ProjectionHead<Scalar>::forward(const Matrix& batch) {
  if (mode_ == Mode::kEval) return infer(batch);
  require(batch.cols() == input_dim_, ErrorKind::kDimension,
          "batch has " + std::to_string(batch.cols()) + " columns, head expects " +
              std::to_string(input_dim_));
  require(batch.rows() >= 2, ErrorKind::kBatchSize,
          "TRAIN-mode forward needs at least 2 rows for batch statistics");

  const Scalar eps = static_cast<Scalar>(kBatchNormEpsilon);
  const Scalar momentum = static_cast<Scalar>(kBatchNormMomentum);
  const auto rows = static_cast<Scalar>(batch.rows());

  Matrix x = batch;
  for (std::size_t l = 0; l < 3; ++l) {
    auto& cache = cache_.blocks[l];
    cache.input = x;
    const std::string fc = kLinear[l];
    const std::string bn = kNorm[l];
    Matrix z = x * tensor(fc + ".weight").transpose();
    z.rowwise() += tensor(fc + ".bias").row(0);

    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mean = z.colwise().mean();
    z.rowwise() -= mean;
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> var = z.array().square().colwise().sum() / rows;
    cache.inv_std = (var.array() + eps).rsqrt().transpose();
    cache.xhat = z * cache.inv_std.asDiagonal();

    running_mean_[l] = (Scalar(1) - momentum) * running_mean_[l] + momentum * mean.transpose();
    running_var_[l] = (Scalar(1) - momentum) * running_var_[l] + momentum * var.transpose();

    Matrix y = cache.xhat * tensor(bn + ".weight").row(0).asDiagonal();
    y.rowwise() += tensor(bn + ".bias").row(0);
    cache.out = y.cwiseMax(Scalar(0));
    x = cache.out;
  }
  Matrix out = x * tensor("fc4.weight").transpose();
  out.rowwise() += tensor("fc4.bias").row(0);
  cache_.valid = true;
  return out;
}

template <class Scalar>
typename ProjectionHead<Scalar>::Matrix ProjectionHead<Scalar>::infer(const Matrix& batch) const {
  require(batch.cols() == input_dim_, ErrorKind::kDimension,
          "batch has " + std::to_string(batch.cols()) + " columns, head expects " +
              std::to_string(input_dim_));
  const Scalar eps = static_cast<Scalar>(kBatchNormEpsilon);
  Matrix x = batch;
  for (std::size_t l = 0; l < 3; ++l) {
    const std::string fc = kLinear[l];
    const std::string bn = kNorm[l];
    Matrix z = x * tensor(fc + ".weight").transpose();
    z.rowwise() += tensor(fc + ".bias").row(0);
    z.rowwise() -= running_mean_[l].transpose();
    const Vector scale =
        tensor(bn + ".weight").row(0).transpose().array() * (running_var_[l].array() + eps).rsqrt();
    z = z * scale.asDiagonal();
    z.rowwise() += tensor(bn + ".bias").row(0);
    x = z.cwiseMax(Scalar(0));
  }
  Matrix out = x * tensor("fc4.weight").transpose();
  out.rowwise() += tensor("fc4.bias").row(0);
  return out;
}

template <class Scalar>
GradientSet<Scalar> ProjectionHead<Scalar>::backward(const Matrix& upstream) const {
  return backward(upstream, nullptr);
}

template <class Scalar>
GradientSet<Scalar> ProjectionHead<Scalar>::backward(const Matrix& upstream,
                                                     Matrix* input_grad) const {
  require(cache_.valid, ErrorKind::kUsage, "backward() needs a preceding TRAIN-mode forward()");
  const auto& last = cache_.blocks[2].out;
  require(upstream.rows() == last.rows() && upstream.cols() == kOutputWidth,
          ErrorKind::kDimension, "upstream gradient shape does not match the cached batch");

  GradientSet<Scalar> grads;
  grads.layout = layout_;
  grads.values = Vector::Zero(params_.size());
  auto grad = [&](const std::string& name) {
    const auto& s = find_slot(layout_, name);
    return RowMajorMap(grads.values.data() + s.offset, s.rows, s.cols);
  };
  const auto rows = static_cast<Scalar>(last.rows());

  grad("fc4.weight") = upstream.transpose() * last;
  grad("fc4.bias") = upstream.colwise().sum();
  Matrix dx = upstream * tensor("fc4.weight");

  for (int l = 2; l >= 0; --l) {
    const auto& cache = cache_.blocks[static_cast<std::size_t>(l)];
    const std::string fc = kLinear[l];
    const std::string bn = kNorm[l];

    const Matrix dy = (cache.out.array() > Scalar(0)).select(dx, Scalar(0));
    grad(bn + ".weight") = (dy.array() * cache.xhat.array()).colwise().sum();
    grad(bn + ".bias") = dy.colwise().sum();

    const Matrix dxhat = dy * tensor(bn + ".weight").row(0).asDiagonal();
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_dxhat = dxhat.colwise().sum();
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum_dxhat_xhat =
        (dxhat.array() * cache.xhat.array()).colwise().sum();
    Matrix dz = rows * dxhat;
    dz.rowwise() -= sum_dxhat;
    dz -= cache.xhat * sum_dxhat_xhat.asDiagonal();
    dz = dz * (cache.inv_std / rows).asDiagonal();

    grad(fc + ".weight") = dz.transpose() * cache.input;
    grad(fc + ".bias") = dz.colwise().sum();
    if (l > 0 || input_grad != nullptr) dx = dz * tensor(fc + ".weight");
  }
  if (input_grad != nullptr) *input_grad = dx;
  return grads;
}

template struct GradientSet<float>;
template struct GradientSet<double>;
template class ProjectionHead<float>;
template class ProjectionHead<double>;

}  // namespace herdid
