#include "herdid/simulate.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "herdid/error.hpp"
#include "herdid/rng.hpp"

namespace herdid {
namespace {

constexpr std::uint64_t kPrototypeStream = 0xFFFF'FFFF'FFFF'FFFFULL;

void normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm == 0.0) return;
  for (double& x : v) x /= norm;
}

// Adds isotropic noise then re-normalizes. A zero sigma skips the draw so
// noiseless configurations reproduce the input exactly.
std::vector<double> perturb(const std::vector<double>& base, double sigma, Rng& rng) {
  std::vector<double> out = base;
  if (sigma == 0.0) return out;
  for (double& x : out) x += sigma * rng.normal();
  normalize(out);
  return out;
}

}  // namespace

void validate(const SimConfig& c) {
  require(c.n_identities >= 2, ErrorKind::kConfig, "n_identities must be >= 2");
  require(c.n_frames >= 2, ErrorKind::kConfig, "n_frames must be >= 2");
  require(c.embedding_dim >= 1, ErrorKind::kConfig, "embedding_dim must be >= 1");
  require(c.views_per_detection >= 2, ErrorKind::kConfig, "views_per_detection must be >= 2");
  require(std::isfinite(c.identity_noise_sigma) && c.identity_noise_sigma >= 0.0,
          ErrorKind::kConfig, "identity_noise_sigma must be finite and >= 0");
  require(std::isfinite(c.view_noise_sigma) && c.view_noise_sigma >= 0.0, ErrorKind::kConfig,
          "view_noise_sigma must be finite and >= 0");
  require(c.visibility_prob > 0.0 && c.visibility_prob <= 1.0, ErrorKind::kConfig,
          "visibility_prob must be in (0, 1]");
}

EmbeddingDataset generate(const SimConfig& config) {
  validate(config);
  const std::size_t dim = config.embedding_dim;

  Rng proto_rng(derive_seed(config.seed, kPrototypeStream));
  std::vector<std::vector<double>> prototypes(config.n_identities, std::vector<double>(dim));
  for (auto& p : prototypes) {
    for (double& x : p) x = proto_rng.normal();
    normalize(p);
  }

  std::vector<DetectionRecord> records;
  records.reserve(std::size_t{config.n_frames} * config.n_identities);
  for (std::uint32_t frame = 0; frame < config.n_frames; ++frame) {
    Rng rng(derive_seed(config.seed, frame));
    std::vector<std::uint32_t> visible;
    for (std::uint32_t id = 0; id < config.n_identities; ++id) {
      if (config.visibility_prob >= 1.0 || rng.uniform() < config.visibility_prob) {
        visible.push_back(id);
      }
    }
    // Detection order within a frame carries no identity information.
    rng.shuffle(visible.begin(), visible.end());
    std::uint32_t detection = 0;
    for (std::uint32_t id : visible) {
      const auto base = perturb(prototypes[id], config.identity_noise_sigma, rng);
      DetectionRecord r;
      r.frame_id = frame;
      r.detection_idx = detection++;
      r.gt_label = static_cast<std::int32_t>(id);
      r.views.reserve(dim * config.views_per_detection);
      for (std::uint32_t v = 0; v < config.views_per_detection; ++v) {
        for (double x : perturb(base, config.view_noise_sigma, rng)) {
          r.views.push_back(static_cast<float>(x));
        }
      }
      records.push_back(std::move(r));
    }
  }
  return EmbeddingDataset(config.embedding_dim, config.views_per_detection, config.n_identities,
                          std::move(records));
}

}  // namespace herdid
