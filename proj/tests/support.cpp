#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "dsanet/cli.hpp"
#include "dsanet/ops.hpp"
#include "dsanet/specview.hpp"

namespace dsanet::testing {

ad::Tensor random_tensor(Rng& rng, ad::Shape shape, double lo, double hi, bool requires_grad) {
  std::vector<double> values(ad::element_count(shape));
  for (double& v : values) v = rng.uniform(lo, hi);
  return ad::Tensor(std::move(shape), std::move(values), requires_grad);
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

double gradient_error(const std::function<ad::Tensor(ad::Graph&)>& objective,
                      const std::vector<ad::Tensor>& inputs, double h, std::uint64_t graph_seed) {
  for (const auto& t : inputs) t.zero_grad();
  {
    ad::Graph g(graph_seed);
    ad::Tensor loss = objective(g);
    g.backward(loss);
  }
  double worst = 0.0;
  for (const auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(analytic.size());
    auto values = t.values();
    ad::NoGradGuard no_grad;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      ad::Graph gp(graph_seed);
      const double up = objective(gp).item();
      values[i] = saved - h;
      ad::Graph gm(graph_seed);
      const double down = objective(gm).item();
      values[i] = saved;
      numeric[i] = (up - down) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

ad::Tensor weighted_sum(ad::Graph& g, const ad::Tensor& y, const ad::Tensor& w) {
  return ad::sum(g, ad::hadamard(g, y, w));
}

hsi::Cube random_cube(Rng& rng, std::size_t height, std::size_t width, std::size_t bands,
                      double lo, double hi) {
  hsi::Cube cube{height, width, bands, std::vector<double>(height * width * bands)};
  for (double& v : cube.values) v = rng.uniform(lo, hi);
  return cube;
}

model::DSANetModel random_model(Rng& rng, const model::ModelConfig& config, double spread) {
  model::DSANetModel m = model::allocate_model(config);
  for (auto& p : m.parameters()) {
    for (double& v : p.value.values()) {
      v = p.nonnegative ? rng.uniform(0.0, spread) : rng.uniform(-spread, spread);
    }
  }
  auto fill_running = [&](const model::BatchNormLayer& bn) {
    for (double& v : bn.running.mean.values()) v = rng.uniform(-spread, spread);
    for (double& v : bn.running.var.values()) v = rng.uniform(0.1, 2.0);
  };
  fill_running(m.encoder_bn);
  for (const auto& bn : m.view_bn) fill_running(bn);
  return m;
}

model::ModelConfig tiny_config(std::uint64_t seed) {
  model::ModelConfig c;
  c.endmembers = 3;
  c.window = 3;
  c.hidden = 8;
  std::vector<std::size_t> labels(12);
  for (std::size_t b = 0; b < labels.size(); ++b) labels[b] = b / 4;
  c.partition = specview::partition_views(labels, 2);
  c.partition.clusters = 3;
  c.seed = seed;
  return c;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  const auto base = std::filesystem::temp_directory_path();
  for (;;) {
    path_ = base / ("dsanet-test-" + tag + "-" + std::to_string(counter++));
    if (std::filesystem::create_directories(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  return hsi::read_file(path);
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = hsi::read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

CliRun run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

}  // namespace dsanet::testing
