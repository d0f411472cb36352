#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace herdid {

// Every failure carries a category so the CLI can report it in one
// machine-parsable line ("error: <category>: <message>").
enum class ErrorKind {
  kFormat,
  kLength,
  kData,
  kInvariant,
  kDuplicateRecord,
  kDimension,
  kBatchSize,
  kUsage,
  kConfig,
  kInsufficientData,
  kDegenerateFeature,
  kEmptyPositive,
  kCoverage,
  kIo,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace herdid
