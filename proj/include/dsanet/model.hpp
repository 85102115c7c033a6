#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dsanet/hsi.hpp"
#include "dsanet/ops.hpp"
#include "dsanet/optim.hpp"
#include "dsanet/specview.hpp"
#include "dsanet/tensor.hpp"
#include "dsanet/unmix_result.hpp"

namespace dsanet::model {

struct ModelConfig {
  std::size_t endmembers = 4;  // P
  std::size_t window = 3;      // k, odd; the spatial branch sees K = k^2 pixels
  std::size_t hidden = 64;     // D
  double dropout = 0.1;
  specview::ViewPartition partition;
  double lambda1 = 1.0;  // spectral angle weight
  double lambda2 = 1e-3; // L1/2 sparsity weight
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;

  std::size_t bands() const { return partition.band_count(); }
  std::size_t window_pixels() const { return window * window; }
};

void validate(const ModelConfig& config);

struct BatchNormLayer {
  ad::Tensor gamma;
  ad::Tensor beta;
  ad::RunningStats running;
};

// Every learnable array of the network. The decoder columns are the
// endmember estimates.
struct DSANetModel {
  ModelConfig config;
  ad::Mode mode = ad::Mode::kTrain;
  std::uint64_t provenance = 0;  // hash of the run that produced the weights

  // Spatial branch: shared pixel encoder, then a full-window convolution.
  ad::Tensor encoder;        // D x L
  BatchNormLayer encoder_bn; // D
  ad::Tensor conv_kernels;   // P x D x K
  ad::Tensor conv_bias;      // P

  // Spectral branch: one encoder per view.
  std::vector<ad::Tensor> view_encoders;  // P x L_i
  std::vector<BatchNormLayer> view_bn;    // P each

  // Cross-fusion attention gates.
  ad::Tensor spatial_gate;       // P x P
  ad::Tensor spatial_gate_bias;  // P
  ad::Tensor spectral_gate;      // P x P
  ad::Tensor spectral_gate_bias; // P

  ad::Tensor decoder;  // L x P, kept >= 0

  // Trainable tensors for the optimizer; the decoder is flagged nonnegative.
  std::vector<ad::Parameter> parameters() const;
  // Every array including running statistics, in checkpoint order.
  std::vector<ad::Parameter> state() const;
  // Deep copy; the default copy shares tensor storage.
  DSANetModel clone() const;
};

// Correctly shaped model with zero weights, unit batch-norm scale and
// fresh running statistics.
DSANetModel allocate_model(const ModelConfig& config);

// Uniform(-sqrt(6 / (fan_in + fan_out)), +...) weights, unit batch-norm
// scale, zero biases, decoder seeded from atgp_init on the cube.
DSANetModel init_model(const ModelConfig& config, const hsi::Cube& cube);

// Orthogonal-projection pure-pixel picker. Returns P x L picked spectra.
std::vector<double> atgp_init(const hsi::Cube& cube, std::size_t materials);

// Indices (into the cube's pixels) picked by atgp_init, in pick order.
std::vector<std::size_t> atgp_pick(const hsi::Cube& cube, std::size_t materials);

// Network input for B window centers.
struct Batch {
  ad::Tensor windows;  // (B*K) x L, the K window pixels of each center in turn
  ad::Tensor centers;  // B x L
  std::size_t size() const { return centers.dim(0); }
};

Batch make_batch(const hsi::Cube& cube, std::span<const std::size_t> pixels, std::size_t window);
Batch make_batch(std::span<const hsi::Patch> patches);

struct FusionTrace {
  ad::Tensor spatial_cross;   // s_spa * s_spe
  ad::Tensor spectral_cross;  // s_spe * s_spa
  ad::Tensor spatial_attention;
  ad::Tensor spectral_attention;
  ad::Tensor fused;
  ad::Tensor abundances;  // softmax(fused), rows on the simplex
};

struct ForwardTrace {
  ad::Tensor hidden;  // (B*K) x D window encodings
  ad::Tensor spatial;  // B x P
  ad::Tensor spectral; // B x P
  FusionTrace fusion;
  ad::Tensor reconstruction;  // B x L
  const ad::Tensor& abundances() const { return fusion.abundances; }
};

// Spatial branch. windows is (B*K) x L; returns B x P. When hidden is
// non-null it receives the (B*K) x D encodings.
ad::Tensor spatial_forward(ad::Graph& g, const DSANetModel& model, const ad::Tensor& windows,
                           ad::Tensor* hidden = nullptr);
// Spectral branch on B x L center spectra; returns the B x P sum of the
// per-view outputs.
ad::Tensor spectral_forward(ad::Graph& g, const DSANetModel& model, const ad::Tensor& centers);
// Per-view outputs of the spectral branch, B x P each.
std::vector<ad::Tensor> spectral_views(ad::Graph& g, const DSANetModel& model,
                                       const ad::Tensor& centers);
FusionTrace cfan_forward(ad::Graph& g, const DSANetModel& model, const ad::Tensor& spatial,
                         const ad::Tensor& spectral);
// B x P abundances -> B x L reconstructions.
ad::Tensor decode(ad::Graph& g, const DSANetModel& model, const ad::Tensor& abundances);

ForwardTrace forward(ad::Graph& g, const DSANetModel& model, const Batch& batch);

// Batch mean of lambda1 * SAD(x, xhat) + lambda2 * sum(sqrt(s_c)).
ad::Tensor loss(ad::Graph& g, const ad::Tensor& centers, const ForwardTrace& trace,
                double lambda1, double lambda2);

struct StepInfo {
  std::size_t epoch;
  std::size_t batch;
  double loss;
};

struct TrainResult {
  DSANetModel model;
  std::vector<double> history;  // mean loss per epoch
};

// after_step, when set, runs after every optimizer step.
TrainResult train(const hsi::Cube& cube, const ModelConfig& config,
                  const std::function<void(const DSANetModel&, const StepInfo&)>& after_step = {});

// Abundances for every pixel (infer mode required). Pixels are processed in
// fixed-size chunks spread over `threads` workers; the result does not depend
// on the thread count.
UnmixResult infer(const hsi::Cube& cube, const DSANetModel& model, unsigned threads = 1);

// Stable hash of the model configuration (checkpoint encoding).
std::uint64_t config_hash(const ModelConfig& config);

}  // namespace dsanet::model
