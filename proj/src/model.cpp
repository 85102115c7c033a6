#include "dsanet/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsanet/error.hpp"
#include "dsanet/random.hpp"

namespace dsanet::model {
namespace {

using ad::Graph;
using ad::Tensor;

void glorot_fill(Rng& rng, Tensor& t, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

BatchNormLayer fresh_batchnorm(std::size_t features) {
  return {Tensor::full({features}, 1.0, true), Tensor::zeros({features}, true),
          ad::RunningStats::fresh(features)};
}

BatchNormLayer clone_layer(const BatchNormLayer& layer) {
  return {layer.gamma.clone(), layer.beta.clone(),
          {layer.running.mean.clone(), layer.running.var.clone()}};
}

// Linear -> batch norm -> dropout -> ReLU on the rows of x.
Tensor encode_block(Graph& g, const Tensor& x, const Tensor& weight, const BatchNormLayer& bn,
                    double dropout, ad::Mode mode) {
  Tensor z = ad::matmul(g, x, ad::transpose(g, weight));
  ad::RunningStats running = bn.running;
  z = ad::batchnorm(g, z, bn.gamma, bn.beta, mode, running);
  z = ad::dropout(g, z, dropout, mode);
  return ad::relu(g, z);
}

// att(v) = softmax(v W^T + b)
Tensor attention_gate(Graph& g, const Tensor& v, const Tensor& weight, const Tensor& bias) {
  return ad::softmax(g, ad::add_bias(g, ad::matmul(g, v, ad::transpose(g, weight)), bias));
}

}  // namespace

void validate(const ModelConfig& c) {
  if (c.endmembers < 2) throw ConfigError("model needs at least two endmembers (P >= 2)");
  if (c.window == 0 || c.window % 2 == 0) {
    throw ConfigError("window side k must be a positive odd number, got " +
                      std::to_string(c.window));
  }
  if (c.hidden == 0) throw ConfigError("hidden width D must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (!(c.lambda1 >= 0.0) || !(c.lambda2 >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (!(c.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (c.batch_size == 0) throw ConfigError("batch size must be positive");
  specview::validate(c.partition);
}

std::vector<ad::Parameter> DSANetModel::parameters() const {
  std::vector<ad::Parameter> out = {
      {"encoder", encoder},
      {"encoder_bn.gamma", encoder_bn.gamma},
      {"encoder_bn.beta", encoder_bn.beta},
      {"conv_kernels", conv_kernels},
      {"conv_bias", conv_bias},
  };
  for (std::size_t i = 0; i < view_encoders.size(); ++i) {
    const std::string prefix = "view" + std::to_string(i);
    out.push_back({prefix + ".encoder", view_encoders[i]});
    out.push_back({prefix + ".bn.gamma", view_bn[i].gamma});
    out.push_back({prefix + ".bn.beta", view_bn[i].beta});
  }
  out.push_back({"spatial_gate", spatial_gate});
  out.push_back({"spatial_gate_bias", spatial_gate_bias});
  out.push_back({"spectral_gate", spectral_gate});
  out.push_back({"spectral_gate_bias", spectral_gate_bias});
  out.push_back({"decoder", decoder, true});
  return out;
}

std::vector<ad::Parameter> DSANetModel::state() const {
  std::vector<ad::Parameter> out = {
      {"encoder", encoder},
      {"encoder_bn.gamma", encoder_bn.gamma},
      {"encoder_bn.beta", encoder_bn.beta},
      {"encoder_bn.running_mean", encoder_bn.running.mean},
      {"encoder_bn.running_var", encoder_bn.running.var},
      {"conv_kernels", conv_kernels},
      {"conv_bias", conv_bias},
  };
  for (std::size_t i = 0; i < view_encoders.size(); ++i) {
    const std::string prefix = "view" + std::to_string(i);
    out.push_back({prefix + ".encoder", view_encoders[i]});
    out.push_back({prefix + ".bn.gamma", view_bn[i].gamma});
    out.push_back({prefix + ".bn.beta", view_bn[i].beta});
    out.push_back({prefix + ".bn.running_mean", view_bn[i].running.mean});
    out.push_back({prefix + ".bn.running_var", view_bn[i].running.var});
  }
  out.push_back({"spatial_gate", spatial_gate});
  out.push_back({"spatial_gate_bias", spatial_gate_bias});
  out.push_back({"spectral_gate", spectral_gate});
  out.push_back({"spectral_gate_bias", spectral_gate_bias});
  out.push_back({"decoder", decoder, true});
  return out;
}

DSANetModel DSANetModel::clone() const {
  DSANetModel copy;
  copy.config = config;
  copy.mode = mode;
  copy.provenance = provenance;
  copy.encoder = encoder.clone();
  copy.encoder_bn = clone_layer(encoder_bn);
  copy.conv_kernels = conv_kernels.clone();
  copy.conv_bias = conv_bias.clone();
  for (const auto& w : view_encoders) copy.view_encoders.push_back(w.clone());
  for (const auto& bn : view_bn) copy.view_bn.push_back(clone_layer(bn));
  copy.spatial_gate = spatial_gate.clone();
  copy.spatial_gate_bias = spatial_gate_bias.clone();
  copy.spectral_gate = spectral_gate.clone();
  copy.spectral_gate_bias = spectral_gate_bias.clone();
  copy.decoder = decoder.clone();
  return copy;
}

std::vector<std::size_t> atgp_pick(const hsi::Cube& cube, std::size_t materials) {
  hsi::validate(cube);
  const std::size_t N = cube.pixel_count(), L = cube.bands;
  if (materials == 0 || materials > std::min(L, N)) {
    throw ConfigError("ATGP needs 1 <= P <= min(L, H*W), got P=" + std::to_string(materials));
  }
  // Residuals of every pixel against the span of the picks so far.
  std::vector<double> residual = cube.values;
  std::vector<double> norms(N, 0.0);
  auto refresh_norms = [&] {
    for (std::size_t i = 0; i < N; ++i) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) s += residual[i * L + l] * residual[i * L + l];
      norms[i] = s;
    }
  };
  refresh_norms();
  const double scale = *std::max_element(norms.begin(), norms.end());
  if (!(scale > 0.0)) throw InitError("cannot pick endmembers from an all-zero cube");

  std::vector<std::size_t> picks;
  std::vector<double> basis(L);
  for (std::size_t p = 0; p < materials; ++p) {
    const std::size_t best =
        static_cast<std::size_t>(std::max_element(norms.begin(), norms.end()) - norms.begin());
    if (norms[best] <= 1e-20 * scale) {
      throw InitError("data span only " + std::to_string(p) +
                      " independent spectra; try a smaller endmember count");
    }
    picks.push_back(best);
    const double inv = 1.0 / std::sqrt(norms[best]);
    for (std::size_t l = 0; l < L; ++l) basis[l] = residual[best * L + l] * inv;
    for (std::size_t i = 0; i < N; ++i) {
      double* r = &residual[i * L];
      double dot = 0.0;
      for (std::size_t l = 0; l < L; ++l) dot += r[l] * basis[l];
      for (std::size_t l = 0; l < L; ++l) r[l] -= dot * basis[l];
    }
    refresh_norms();
  }
  return picks;
}

std::vector<double> atgp_init(const hsi::Cube& cube, std::size_t materials) {
  const auto picks = atgp_pick(cube, materials);
  std::vector<double> out;
  out.reserve(materials * cube.bands);
  for (std::size_t idx : picks) {
    auto px = cube.pixel(idx);
    out.insert(out.end(), px.begin(), px.end());
  }
  return out;
}

DSANetModel allocate_model(const ModelConfig& config) {
  validate(config);
  const std::size_t P = config.endmembers, D = config.hidden, L = config.bands(),
                    K = config.window_pixels();
  DSANetModel m;
  m.config = config;
  m.provenance = config_hash(config);
  m.encoder = Tensor::zeros({D, L}, true);
  m.encoder_bn = fresh_batchnorm(D);
  m.conv_kernels = Tensor::zeros({P, D, K}, true);
  m.conv_bias = Tensor::zeros({P}, true);
  for (const auto& view : config.partition.views) {
    m.view_encoders.push_back(Tensor::zeros({P, view.size()}, true));
    m.view_bn.push_back(fresh_batchnorm(P));
  }
  m.spatial_gate = Tensor::zeros({P, P}, true);
  m.spatial_gate_bias = Tensor::zeros({P}, true);
  m.spectral_gate = Tensor::zeros({P, P}, true);
  m.spectral_gate_bias = Tensor::zeros({P}, true);
  m.decoder = Tensor::zeros({L, P}, true);
  return m;
}

DSANetModel init_model(const ModelConfig& config, const hsi::Cube& cube) {
  DSANetModel m = allocate_model(config);
  if (config.bands() != cube.bands) {
    throw DimensionError("partition covers " + std::to_string(config.bands()) +
                         " bands but the cube has " + std::to_string(cube.bands));
  }
  const std::size_t P = config.endmembers, D = config.hidden, L = config.bands(),
                    K = config.window_pixels();
  Rng rng(mix_seed(config.seed, 1));
  glorot_fill(rng, m.encoder, L, D);
  glorot_fill(rng, m.conv_kernels, D * K, P);
  for (auto& w : m.view_encoders) glorot_fill(rng, w, w.dim(1), P);
  glorot_fill(rng, m.spatial_gate, P, P);
  glorot_fill(rng, m.spectral_gate, P, P);

  const auto seeds = atgp_init(cube, P);
  auto w = m.decoder.values();
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t l = 0; l < L; ++l) w[l * P + p] = seeds[p * L + l];
  return m;
}

Batch make_batch(const hsi::Cube& cube, std::span<const std::size_t> pixels, std::size_t window) {
  std::vector<hsi::Patch> patches;
  patches.reserve(pixels.size());
  for (std::size_t idx : pixels) {
    if (idx >= cube.pixel_count()) throw DimensionError("pixel index out of range");
    patches.push_back(hsi::extract_patch(cube, idx / cube.width, idx % cube.width, window));
  }
  return make_batch(patches);
}

Batch make_batch(std::span<const hsi::Patch> patches) {
  if (patches.empty()) throw DegenerateError("empty batch");
  const std::size_t K = patches.front().count(), L = patches.front().bands;
  std::vector<double> windows, centers;
  windows.reserve(patches.size() * K * L);
  centers.reserve(patches.size() * L);
  for (const hsi::Patch& p : patches) {
    if (p.count() != K || p.bands != L) throw DimensionError("patches in a batch differ in shape");
    windows.insert(windows.end(), p.pixels.begin(), p.pixels.end());
    auto c = p.pixel((K - 1) / 2);
    centers.insert(centers.end(), c.begin(), c.end());
  }
  const std::size_t B = patches.size();
  return {Tensor({B * K, L}, std::move(windows)), Tensor({B, L}, std::move(centers))};
}

Tensor spatial_forward(Graph& g, const DSANetModel& model, const Tensor& windows,
                       Tensor* hidden) {
  const std::size_t K = model.config.window_pixels(), D = model.config.hidden;
  if (windows.rank() != 2 || windows.dim(1) != model.config.bands() || windows.dim(0) % K != 0) {
    throw DimensionError("spatial branch expects (B*" + std::to_string(K) + ") x " +
                         std::to_string(model.config.bands()) + " windows, got " +
                         ad::to_string(windows.shape()));
  }
  const std::size_t B = windows.dim(0) / K;
  // One shared encoder for every window pixel; batch norm sees all B*K rows.
  Tensor h = encode_block(g, windows, model.encoder, model.encoder_bn, model.config.dropout,
                          model.mode);
  if (hidden) *hidden = h;
  // Window positions become the convolution's sequence axis, hidden
  // features its channels.
  Tensor seq = ad::swap_last_axes(g, ad::reshape(g, h, {B, K, D}));
  return ad::conv1d(g, seq, model.conv_kernels, model.conv_bias);
}

std::vector<Tensor> spectral_views(Graph& g, const DSANetModel& model, const Tensor& centers) {
  const auto& views = model.config.partition.views;
  if (centers.rank() != 2 || centers.dim(1) != model.config.bands()) {
    throw DimensionError("spectral branch expects B x " + std::to_string(model.config.bands()) +
                         " spectra, got " + ad::to_string(centers.shape()));
  }
  if (views.size() != model.view_encoders.size()) {
    throw DimensionError("partition has " + std::to_string(views.size()) +
                         " views but the model has " +
                         std::to_string(model.view_encoders.size()) + " view encoders");
  }
  std::vector<Tensor> outputs;
  outputs.reserve(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    Tensor x = ad::select_columns(g, centers, views[i]);
    outputs.push_back(encode_block(g, x, model.view_encoders[i], model.view_bn[i],
                                   model.config.dropout, model.mode));
  }
  return outputs;
}

Tensor spectral_forward(Graph& g, const DSANetModel& model, const Tensor& centers) {
  std::vector<Tensor> views = spectral_views(g, model, centers);
  Tensor total = views.front();
  for (std::size_t i = 1; i < views.size(); ++i) total = ad::add(g, total, views[i]);
  return total;
}

FusionTrace cfan_forward(Graph& g, const DSANetModel& model, const Tensor& spatial,
                         const Tensor& spectral) {
  const std::size_t P = model.config.endmembers;
  if (spatial.rank() != 2 || spatial.dim(1) != P || spatial.shape() != spectral.shape()) {
    throw DimensionError("fusion expects two B x " + std::to_string(P) + " inputs, got " +
                         ad::to_string(spatial.shape()) + " and " +
                         ad::to_string(spectral.shape()));
  }
  FusionTrace t;
  t.spatial_cross = ad::hadamard(g, spatial, spectral);
  t.spectral_cross = ad::hadamard(g, spectral, spatial);
  t.spatial_attention =
      attention_gate(g, t.spatial_cross, model.spatial_gate, model.spatial_gate_bias);
  t.spectral_attention =
      attention_gate(g, t.spectral_cross, model.spectral_gate, model.spectral_gate_bias);
  t.fused = ad::add(g, ad::hadamard(g, spatial, t.spatial_attention),
                    ad::hadamard(g, spectral, t.spectral_attention));
  t.abundances = ad::softmax(g, t.fused);
  return t;
}

Tensor decode(Graph& g, const DSANetModel& model, const Tensor& abundances) {
  return ad::matmul(g, abundances, ad::transpose(g, model.decoder));
}

ForwardTrace forward(Graph& g, const DSANetModel& model, const Batch& batch) {
  ForwardTrace t;
  t.spatial = spatial_forward(g, model, batch.windows, &t.hidden);
  t.spectral = spectral_forward(g, model, batch.centers);
  t.fusion = cfan_forward(g, model, t.spatial, t.spectral);
  t.reconstruction = decode(g, model, t.fusion.abundances);
  return t;
}

Tensor loss(Graph& g, const Tensor& centers, const ForwardTrace& trace, double lambda1,
            double lambda2) {
  Tensor angle = ad::mean(g, ad::sad_loss(g, centers, trace.reconstruction));
  Tensor sparsity = ad::mean(g, ad::lhalf_penalty(g, trace.abundances()));
  return ad::add(g, ad::scale(g, angle, lambda1), ad::scale(g, sparsity, lambda2));
}

}  // namespace dsanet::model
