#include "herdid/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "herdid/assign.hpp"
#include "herdid/error.hpp"

namespace herdid {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

SimilarityMatrix similarity(const Eigen::MatrixXd& features) {
  require(features.rows() >= 2, ErrorKind::kDimension, "similarity needs at least 2 rows");
  SimilarityMatrix sim;
  sim.norms = features.rowwise().norm();
  for (Eigen::Index i = 0; i < sim.norms.size(); ++i) {
    require(sim.norms(i) > 0.0 && std::isfinite(sim.norms(i)), ErrorKind::kDegenerateFeature,
            "feature row " + std::to_string(i) + " has zero or non-finite norm");
  }
  sim.unit_rows = sim.norms.cwiseInverse().asDiagonal() * features;
  sim.values = sim.unit_rows * sim.unit_rows.transpose();
  return sim;
}

Eigen::MatrixXd similarity_backward(const SimilarityMatrix& sim, const Eigen::MatrixXd& d_sim) {
  // Sim = U U^T  =>  dU = (G + G^T) U;  U_i = x_i / |x_i|  =>
  // dx_i = (dU_i - (dU_i . U_i) U_i) / |x_i|.
  const Eigen::MatrixXd d_unit = (d_sim + d_sim.transpose()) * sim.unit_rows;
  const Eigen::VectorXd radial = (d_unit.array() * sim.unit_rows.array()).rowwise().sum();
  Eigen::MatrixXd d_features = d_unit - radial.asDiagonal() * sim.unit_rows;
  return sim.norms.cwiseInverse().asDiagonal() * d_features;
}

std::size_t MaskMatrix::count(MaskLabel label) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

std::size_t BatchLayout::half() const {
  std::size_t total = 0;
  for (auto s : frame_sizes) total += s;
  return total;
}

MaskMatrix build_mask(const SimilarityMatrix& sim, const BatchLayout& layout) {
  const std::size_t half = layout.half();
  const std::size_t n = 2 * half;
  require(static_cast<std::size_t>(sim.size()) == n, ErrorKind::kDimension,
          "similarity matrix size does not match batch layout");

  const std::size_t frames = layout.frame_sizes.size();
  std::vector<std::size_t> offset(frames, 0);
  for (std::size_t f = 1; f < frames; ++f) offset[f] = offset[f - 1] + layout.frame_sizes[f - 1];

  MaskMatrix mask(n);
  for (std::size_t i = 0; i < n; ++i) mask(i, i) = MaskLabel::kDiscard;
  for (std::size_t i = 0; i < half; ++i) {
    mask(i, i + half) = MaskLabel::kPositive;
    mask(i + half, i) = MaskLabel::kPositive;
  }

  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t g = f + 1; g < frames; ++g) {
      const auto rows = static_cast<Eigen::Index>(layout.frame_sizes[f]);
      const auto cols = static_cast<Eigen::Index>(layout.frame_sizes[g]);
      if (rows == 0 || cols == 0) continue;
      for (std::size_t va = 0; va < 2; ++va) {
        for (std::size_t vb = 0; vb < 2; ++vb) {
          const std::size_t r0 = va * half + offset[f];
          const std::size_t c0 = vb * half + offset[g];
          const Eigen::MatrixXd block = sim.values.block(static_cast<Eigen::Index>(r0),
                                                         static_cast<Eigen::Index>(c0), rows, cols);
          for (const auto& [r, c] : solve_max(block).pairs) {
            mask(r0 + r, c0 + c) = MaskLabel::kPositive;
            mask(c0 + c, r0 + r) = MaskLabel::kPositive;
          }
        }
      }
    }
  }
  return mask;
}

LossParams LossParams::supcon_fixed(double tau) {
  LossParams p;
  p.variant = LossVariant::kSupConFixed;
  p.tau = tau;
  return p;
}

LossParams LossParams::supcon_learnable(double t) {
  LossParams p;
  p.variant = LossVariant::kSupConLearnable;
  p.t = t;
  p.b = 0.0;
  return p;
}

LossParams LossParams::bce(double t, double b) {
  LossParams p;
  p.variant = LossVariant::kBce;
  p.t = t;
  p.b = b;
  return p;
}

void LossParams::clamp() { t = std::clamp(t, t_min, t_max); }

void LossParams::validate() const {
  require(std::isfinite(tau) && tau > 0.0, ErrorKind::kConfig, "temperature tau must be > 0");
  require(std::isfinite(t) && std::isfinite(b), ErrorKind::kConfig, "t and b must be finite");
  require(t_min <= t_max, ErrorKind::kConfig, "t clamp range is empty");
}

LossResult loss_and_grads(const SimilarityMatrix& sim, const MaskMatrix& mask,
                          const LossParams& params) {
  params.validate();
  const auto n = static_cast<std::size_t>(sim.size());
  require(mask.size() == n, ErrorKind::kDimension, "mask and similarity sizes differ");
  const Eigen::MatrixXd& s = sim.values;

  LossResult out;
  out.d_sim = Eigen::MatrixXd::Zero(s.rows(), s.cols());

  if (params.variant == LossVariant::kBce) {
    const double inv_n2 = 1.0 / static_cast<double>(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const MaskLabel label = mask(i, j);
        if (label == MaskLabel::kDiscard) continue;
        const double m = label == MaskLabel::kPositive ? 1.0 : -1.0;
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        const double z = m * (params.t * s(ii, jj) + params.b);
        out.loss += softplus(-z) * inv_n2;
        // d/dz softplus(-z) = -sigmoid(-z)
        const double dz = -sigmoid(-z) * inv_n2;
        out.d_sim(ii, jj) = dz * m * params.t;
        out.d_t += dz * m * s(ii, jj);
        out.d_b += dz * m;
      }
    }
    return out;
  }

  const double scale = params.variant == LossVariant::kSupConFixed ? 1.0 / params.tau : params.t;
  const std::size_t positives = mask.count(MaskLabel::kPositive);
  require(positives > 0, ErrorKind::kEmptyPositive, "SupCon loss needs at least one positive");
  const double inv_p = 1.0 / static_cast<double>(positives);

  Eigen::VectorXd softmax(s.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    std::size_t row_positives = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask(i, j) == MaskLabel::kPositive) ++row_positives;
    }
    if (row_positives == 0) continue;

    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < s.cols(); ++k) {
      if (k != ii) peak = std::max(peak, scale * s(ii, k));
    }
    double denom = 0.0;
    for (Eigen::Index k = 0; k < s.cols(); ++k) {
      softmax(k) = k == ii ? 0.0 : std::exp(scale * s(ii, k) - peak);
      denom += softmax(k);
    }
    softmax /= denom;
    const double log_denom = peak + std::log(denom);
    const double expected_sim = (softmax.array() * s.row(ii).transpose().array()).sum();

    const double weight = static_cast<double>(row_positives) * inv_p;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask(i, j) != MaskLabel::kPositive) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      out.loss += (log_denom - scale * s(ii, jj)) * inv_p;
      out.d_sim(ii, jj) -= scale * inv_p;
      if (params.variant == LossVariant::kSupConLearnable) {
        out.d_t += (expected_sim - s(ii, jj)) * inv_p;
      }
    }
    out.d_sim.row(ii) += weight * scale * softmax.transpose();
  }
  return out;
}

}  // namespace herdid
