#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace herdid {

/// Stage keys for per-stage seeds: derive_seed(master, key). Standalone
/// commands given the same --seed derive the same stage seeds as pipeline.
namespace stage {
inline constexpr std::uint64_t kSimulate = 0x73696D;  // "sim"
inline constexpr std::uint64_t kHeadInit = 0x68656164;  // "head"
inline constexpr std::uint64_t kTrain = 0x747261696E;  // "train"
inline constexpr std::uint64_t kCluster = 0x636C7573;  // "clus"
}  // namespace stage

/// Runs one command line (args exclude the program name). Returns the
/// process exit code; failures print one "error: <category>: <message>"
/// line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::string& path);

}  // namespace herdid
