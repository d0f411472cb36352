#include "herdid/error.hpp"

namespace herdid {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kLength: return "length";
    case ErrorKind::kData: return "data";
    case ErrorKind::kInvariant: return "invariant";
    case ErrorKind::kDuplicateRecord: return "duplicate-record";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kBatchSize: return "batch-size";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kDegenerateFeature: return "degenerate-feature";
    case ErrorKind::kEmptyPositive: return "empty-positive";
    case ErrorKind::kCoverage: return "coverage";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace herdid
