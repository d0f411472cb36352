#include "herdid/eval.hpp"

#include <iomanip>
#include <sstream>

#include <Eigen/Core>

#include "herdid/assign.hpp"
#include "herdid/error.hpp"
#include "herdid/store.hpp"

namespace herdid {

EvalReport evaluate(std::span<const std::size_t> assignments, std::span<const std::int32_t> gt_labels,
                    std::size_t n_identities) {
  require(n_identities >= 1, ErrorKind::kConfig, "n_identities must be >= 1");
  require(assignments.size() == gt_labels.size(), ErrorKind::kUsage,
          "assignment and label counts differ");
  EvalReport report;
  report.n_identities = n_identities;
  report.confusion.assign(n_identities, std::vector<std::uint64_t>(n_identities, 0));
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    require(gt_labels[i] != kUnknownLabel, ErrorKind::kCoverage,
            "detection " + std::to_string(i) + " has no ground-truth label");
    require(gt_labels[i] >= 0 && static_cast<std::size_t>(gt_labels[i]) < n_identities,
            ErrorKind::kUsage, "label outside 0..N_ID-1");
    require(assignments[i] < n_identities, ErrorKind::kUsage, "cluster index outside 0..N_ID-1");
    ++report.confusion[assignments[i]][static_cast<std::size_t>(gt_labels[i])];
  }
  report.total = assignments.size();

  const auto n = static_cast<Eigen::Index>(n_identities);
  Eigen::MatrixXd counts(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index g = 0; g < n; ++g) {
      counts(c, g) = static_cast<double>(report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(g)]);
    }
  }
  report.matching.assign(n_identities, 0);
  for (const auto& [cluster, identity] : solve_max(counts).pairs) {
    report.matching[cluster] = identity;
    report.correct += report.confusion[cluster][identity];
  }
  report.accuracy = report.total == 0 ? 0.0
                                      : static_cast<double>(report.correct) /
                                            static_cast<double>(report.total);

  report.recall.assign(n_identities, 0.0);
  for (std::size_t cluster = 0; cluster < n_identities; ++cluster) {
    const std::size_t identity = report.matching[cluster];
    std::uint64_t support = 0;
    for (std::size_t c = 0; c < n_identities; ++c) support += report.confusion[c][identity];
    if (support > 0) {
      report.recall[identity] = static_cast<double>(report.confusion[cluster][identity]) /
                                static_cast<double>(support);
    }
  }
  return report;
}

nlohmann::json to_json(const EvalReport& report) {
  return nlohmann::json{
      {"n_identities", report.n_identities},
      {"accuracy", report.accuracy},
      {"correct", report.correct},
      {"total", report.total},
      {"matching", report.matching},
      {"per_identity_recall", report.recall},
      {"confusion", report.confusion},
  };
}

std::string format_table(const EvalReport& report) {
  std::ostringstream out;
  out << "identity  cluster  recall\n";
  for (std::size_t cluster = 0; cluster < report.matching.size(); ++cluster) {
    const auto identity = report.matching[cluster];
    out << std::setw(8) << identity << "  " << std::setw(7) << cluster << "  " << std::fixed
        << std::setprecision(4) << report.recall[identity] << "\n";
  }
  out << "accuracy " << std::fixed << std::setprecision(4) << report.accuracy << " ("
      << report.correct << "/" << report.total << ")\n";
  return out.str();
}

}  // namespace herdid
