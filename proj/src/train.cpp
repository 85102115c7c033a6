#include <algorithm>
#include <cmath>
#include <exception>
#include <iostream>
#include <numeric>
#include <thread>

#include "dsanet/error.hpp"
#include "dsanet/model.hpp"
#include "dsanet/random.hpp"

namespace dsanet::model {
namespace {

constexpr std::size_t kInferChunk = 128;

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

bool is_zero_pixel(std::span<const double> px) {
  for (double v : px)
    if (v != 0.0) return false;
  return true;
}

}  // namespace

TrainResult train(const hsi::Cube& cube, const ModelConfig& config,
                  const std::function<void(const DSANetModel&, const StepInfo&)>& after_step) {
  TrainResult result{init_model(config, cube), {}};
  DSANetModel& model = result.model;
  model.mode = ad::Mode::kTrain;

  std::vector<std::size_t> order;
  order.reserve(cube.pixel_count());
  for (std::size_t i = 0; i < cube.pixel_count(); ++i) {
    if (!is_zero_pixel(cube.pixel(i))) order.push_back(i);
  }
  if (order.size() != cube.pixel_count()) {
    std::cerr << "warning: skipping " << cube.pixel_count() - order.size()
              << " all-zero pixel(s); the spectral angle is undefined for them\n";
  }
  if (order.empty() && config.epochs > 0) throw DegenerateError("no nonzero pixels to train on");

  ad::Adam optimizer(model.parameters(), {config.learning_rate});
  Rng shuffle_rng(mix_seed(config.seed, 2));
  std::uint64_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> members(order.data() + start, stop - start);
      Batch batch = make_batch(cube, members, config.window);

      ad::Graph graph(mix_seed(config.seed, 1000 + step));
      const auto where = [&] {
        return " at epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(batch_index + 1);
      };
      ForwardTrace trace = forward(graph, model, batch);
      for (const ad::Tensor* t : {&trace.fusion.abundances, &trace.reconstruction}) {
        if (!all_finite(t->values())) throw NumericError("non-finite activations" + where());
      }
      ad::Tensor objective = loss(graph, batch.centers, trace, config.lambda1, config.lambda2);
      const double value = objective.item();
      if (!std::isfinite(value)) throw NumericError("non-finite loss" + where());
      graph.backward(objective);
      optimizer.step();
      ++step;
      epoch_total += value * static_cast<double>(members.size());
      if (after_step) after_step(model, {epoch, batch_index, value});
    }
    result.history.push_back(epoch_total / static_cast<double>(order.size()));
  }
  model.mode = ad::Mode::kInfer;
  return result;
}

UnmixResult infer(const hsi::Cube& cube, const DSANetModel& model, unsigned threads) {
  if (model.mode != ad::Mode::kInfer) throw ContractError("infer() needs a model in infer mode");
  if (cube.bands != model.config.bands()) {
    throw DimensionError("model expects " + std::to_string(model.config.bands()) +
                         " bands, cube has " + std::to_string(cube.bands));
  }
  hsi::validate(cube);
  const std::size_t P = model.config.endmembers, L = cube.bands, N = cube.pixel_count();
  UnmixResult out;
  out.height = cube.height;
  out.width = cube.width;
  out.bands = L;
  out.materials = P;
  auto dec = model.decoder.values();
  out.endmembers.assign(dec.begin(), dec.end());
  out.abundances.assign(N * P, 0.0);
  out.config_hash = model.provenance;
  out.seed = model.config.seed;

  const std::size_t chunks = (N + kInferChunk - 1) / kInferChunk;
  const unsigned workers = static_cast<unsigned>(
      std::max<std::size_t>(1, std::min<std::size_t>(threads == 0 ? 1 : threads, chunks)));
  std::vector<std::exception_ptr> failures(workers);

  // Chunk boundaries are fixed, and each pixel's row only depends on its own
  // window in infer mode, so worker count cannot change the output.
  auto work = [&](unsigned worker) {
    try {
      ad::NoGradGuard no_grad;
      for (std::size_t c = worker; c < chunks; c += workers) {
        const std::size_t first = c * kInferChunk;
        const std::size_t last = std::min(N, first + kInferChunk);
        std::vector<std::size_t> pixels(last - first);
        std::iota(pixels.begin(), pixels.end(), first);
        Batch batch = make_batch(cube, pixels, model.config.window);
        ad::Graph graph;
        ForwardTrace trace = forward(graph, model, batch);
        auto s = trace.abundances().values();
        std::copy(s.begin(), s.end(), out.abundances.begin() + first * P);
      }
    } catch (...) {
      failures[worker] = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
  return out;
}

}  // namespace dsanet::model
