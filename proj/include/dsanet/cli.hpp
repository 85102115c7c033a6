#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace dsanet::cli {

// Exit codes of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Everything partition, train and eval read. Paths are empty when unset.
struct RunConfig {
  std::string data;       // HSIB cube
  std::string truth;      // HSGT; defaults to the cube's sidecar
  std::string partition;  // partition file; computed from the cube when empty
  std::string model;      // eval: checkpoint to score instead of training
  std::size_t clusters = 4;  // M
  std::size_t views = 4;     // N
  std::size_t sample_size = 10000;
  std::size_t endmembers = 4;
  std::size_t window = 3;
  std::size_t hidden = 64;
  double dropout = 0.1;
  double lambda1 = 1.0;
  double lambda2 = 1e-3;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t repeats = 1;
  bool timing = false;  // record wall time in report.json (otherwise 0)
  std::string out = ".";
  unsigned threads = 1;
};

// Every field, in declaration order.
nlohmann::ordered_json to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys and wrong types throw
// ConfigError.
RunConfig from_json(const nlohmann::json& j);

// FNV-1a over the canonical JSON of the config with out and threads removed
// and every input path replaced by a digest of the file's bytes.
std::uint64_t run_hash(const RunConfig& config);

std::string hex64(std::uint64_t v);

int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsanet::cli
