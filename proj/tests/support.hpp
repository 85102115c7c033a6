#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsanet/hsi.hpp"
#include "dsanet/model.hpp"
#include "dsanet/random.hpp"
#include "dsanet/tensor.hpp"

namespace dsanet::testing {

ad::Tensor random_tensor(Rng& rng, ad::Shape shape, double lo = -2.0, double hi = 2.0,
                         bool requires_grad = true);

// |a - b| / max(|a|, |b|, floor) with Euclidean norms.
double relative_error(std::span<const double> a, std::span<const double> b,
                      double floor = 1e-7);

// Builds the scalar objective twice per input element (+h, -h) and compares
// the central differences with the gradients from one backward pass. Every
// graph is seeded with graph_seed so dropout masks repeat. Returns the worst
// relative error over the inputs.
double gradient_error(const std::function<ad::Tensor(ad::Graph&)>& objective,
                      const std::vector<ad::Tensor>& inputs, double h = 1e-5,
                      std::uint64_t graph_seed = 0);

// sum(y * w) for a fixed random w, turning any tensor into a scalar.
ad::Tensor weighted_sum(ad::Graph& g, const ad::Tensor& y, const ad::Tensor& w);

// Random cube with values in [lo, hi).
hsi::Cube random_cube(Rng& rng, std::size_t height, std::size_t width, std::size_t bands,
                      double lo = 0.05, double hi = 1.0);

// Model with every weight drawn uniformly from [-spread, spread] (decoder
// from [0, spread]) and running statistics from plausible ranges.
model::DSANetModel random_model(Rng& rng, const model::ModelConfig& config, double spread = 1.0);

// Config for the tiny gradient-check network: P=3, k=3, D=8, N=2, L=12.
model::ModelConfig tiny_config(std::uint64_t seed);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::vector<unsigned char> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

// Runs the CLI in-process and captures both streams.
struct CliRun {
  int code;
  std::string out;
  std::string err;
};
CliRun run_cli(const std::vector<std::string>& args);

}  // namespace dsanet::testing
