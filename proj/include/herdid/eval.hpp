#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace herdid {

struct EvalReport {
  std::size_t n_identities = 0;
  /// confusion[cluster][identity] = detections with that cluster and label.
  std::vector<std::vector<std::uint64_t>> confusion;
  /// matching[cluster] = identity the cluster is scored as.
  std::vector<std::size_t> matching;
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  double accuracy = 0.0;
  /// Fraction of each identity's detections landing in its matched cluster.
  std::vector<double> recall;
};

/// Identity accuracy under the cluster -> identity bijection that maximizes
/// matched detections (Hungarian on the confusion counts).
/// Throws Error(kCoverage) for UNKNOWN labels and Error(kUsage) for
/// indices outside 0..n_identities-1.
EvalReport evaluate(std::span<const std::size_t> assignments, std::span<const std::int32_t> gt_labels,
                    std::size_t n_identities);

nlohmann::json to_json(const EvalReport& report);
std::string format_table(const EvalReport& report);

}  // namespace herdid
