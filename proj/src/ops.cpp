#include "dsanet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsanet/error.hpp"

namespace dsanet::ad {
namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!NoGradGuard::grad_enabled()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

// Output tensor whose requires_grad follows its inputs.
Tensor make_output(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs) {
  return Tensor(std::move(shape), std::move(values), any_requires_grad(inputs));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " differ");
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(t.shape()));
  }
}

// Rows x columns view of a tensor of rank 1 or 2 (rank 1 is a single row).
struct RowView {
  std::size_t rows;
  std::size_t cols;
};

RowView row_view(const char* op, const Tensor& t) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw DimensionError(std::string(op) + ": expected a vector or matrix, got " +
                       to_string(t.shape()));
}

Shape row_result_shape(const Tensor& t) {
  return t.rank() == 1 ? Shape{1} : Shape{t.dim(0)};
}

}  // namespace

RunningStats RunningStats::fresh(std::size_t features) {
  return {Tensor::zeros({features}), Tensor::full({features}, 1.0)};
}

Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  Tensor result = make_output({m, n}, std::move(out), {&a, &b});
  if (result.requires_grad()) {
    g.record(result, [a, b, result, m, k, n]() mutable {
      auto gv = result.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.grad();
        // dA = G . B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = &gv[i * n];
            const double* brow = &bv[p * n];
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        // dB = A^T . G
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = &gv[i * n];
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            double* gbrow = &gb[p * n];
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor transpose(Graph& g, const Tensor& a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  Tensor result = make_output({c, r}, std::move(out), {&a});
  if (result.requires_grad()) {
    g.record(result, [a, result, r, c]() mutable {
      auto gv = result.grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += gv[j * r + i];
    });
  }
  return result;
}

Tensor reshape(Graph& g, const Tensor& a, Shape shape) {
  if (element_count(shape) != a.size()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) + " as " +
                         to_string(shape));
  }
  auto av = a.values();
  Tensor result = make_output(std::move(shape), std::vector<double>(av.begin(), av.end()), {&a});
  if (result.requires_grad()) {
    g.record(result, [a, result]() mutable {
      auto gv = result.grad();
      auto ga = a.grad();
      for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i];
    });
  }
  return result;
}

Tensor swap_last_axes(Graph& g, const Tensor& a) {
  require_rank("swap_last_axes", a, 3);
  const std::size_t b = a.dim(0), r = a.dim(1), c = a.dim(2);
  std::vector<double> out(b * r * c);
  auto av = a.values();
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[(n * c + j) * r + i] = av[(n * r + i) * c + j];
  Tensor result = make_output({b, c, r}, std::move(out), {&a});
  if (result.requires_grad()) {
    g.record(result, [a, result, b, r, c]() mutable {
      auto gv = result.grad();
      auto ga = a.grad();
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[(n * r + i) * c + j] += gv[(n * c + j) * r + i];
    });
  }
  return result;
}

Tensor select_columns(Graph& g, const Tensor& x, std::span<const std::size_t> columns) {
  require_rank("select_columns", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (columns.empty()) throw DimensionError("select_columns: no columns selected");
  for (std::size_t c : columns) {
    if (c >= cols) {
      throw DimensionError("select_columns: column " + std::to_string(c) + " out of range for " +
                           to_string(x.shape()));
    }
  }
  std::vector<std::size_t> picked(columns.begin(), columns.end());
  const std::size_t width = picked.size();
  auto xv = x.values();
  std::vector<double> out(rows * width);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < width; ++j) out[i * width + j] = xv[i * cols + picked[j]];
  Tensor result = make_output({rows, width}, std::move(out), {&x});
  if (result.requires_grad()) {
    g.record(result, [x, result, rows, cols, width, picked = std::move(picked)]() mutable {
      auto gv = result.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < width; ++j) gx[i * cols + picked[j]] += gv[i * width + j];
    });
  }
  return result;
}

Tensor conv1d(Graph& g, const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  require_rank("conv1d kernels", kernels, 3);
  require_rank("conv1d bias", bias, 1);
  const bool batched = input.rank() == 3;
  if (!batched) require_rank("conv1d input", input, 2);
  const std::size_t batch = batched ? input.dim(0) : 1;
  const std::size_t channels = input.dim(batched ? 1 : 0);
  const std::size_t length = input.dim(batched ? 2 : 1);
  const std::size_t out_channels = kernels.dim(0);
  if (kernels.dim(1) != channels || kernels.dim(2) != length) {
    throw DimensionError("conv1d: kernels " + to_string(kernels.shape()) +
                         " do not span input " + to_string(input.shape()));
  }
  if (bias.dim(0) != out_channels) {
    throw DimensionError("conv1d: bias " + to_string(bias.shape()) + " for " +
                         std::to_string(out_channels) + " output channels");
  }
  const std::size_t span = channels * length;
  auto xv = input.values();
  auto kv = kernels.values();
  auto bv = bias.values();
  std::vector<double> out(batch * out_channels);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* x = &xv[n * span];
    for (std::size_t o = 0; o < out_channels; ++o) {
      const double* w = &kv[o * span];
      double acc = 0.0;
      for (std::size_t i = 0; i < span; ++i) acc += w[i] * x[i];
      out[n * out_channels + o] = acc + bv[o];
    }
  }
  Shape shape = batched ? Shape{batch, out_channels} : Shape{out_channels};
  Tensor result = make_output(std::move(shape), std::move(out), {&input, &kernels, &bias});
  if (result.requires_grad()) {
    g.record(result, [input, kernels, bias, result, batch, out_channels, span]() mutable {
      auto gv = result.grad();
      auto xv = input.values();
      auto kv = kernels.values();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t o = 0; o < out_channels; ++o) {
          const double go = gv[n * out_channels + o];
          if (bias.requires_grad()) bias.grad()[o] += go;
          if (go == 0.0) continue;
          if (kernels.requires_grad()) {
            auto gk = kernels.grad();
            for (std::size_t i = 0; i < span; ++i) gk[o * span + i] += go * xv[n * span + i];
          }
          if (input.requires_grad()) {
            auto gx = input.grad();
            for (std::size_t i = 0; i < span; ++i) gx[n * span + i] += go * kv[o * span + i];
          }
        }
      }
    });
  }
  return result;
}

Tensor batchnorm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, Mode mode,
                 RunningStats& running) {
  require_rank("batchnorm", x, 2);
  const std::size_t rows = x.dim(0), features = x.dim(1);
  if (gamma.shape() != Shape{features} || beta.shape() != Shape{features} ||
      running.mean.shape() != Shape{features} || running.var.shape() != Shape{features}) {
    throw DimensionError("batchnorm: parameters do not match input " + to_string(x.shape()));
  }
  auto xv = x.values();
  auto gm = gamma.values();
  auto bt = beta.values();
  std::vector<double> normalized(rows * features);
  std::vector<double> inv_std(features);

  if (mode == Mode::kTrain) {
    std::vector<double> mu(features, 0.0), var(features, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < features; ++j) mu[j] += xv[i * features + j];
    for (double& m : mu) m /= static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < features; ++j) {
        const double d = xv[i * features + j] - mu[j];
        var[j] += d * d;
      }
    auto rm = running.mean.values();
    auto rv = running.var.values();
    for (std::size_t j = 0; j < features; ++j) {
      const double biased = var[j] / static_cast<double>(rows);
      const double unbiased = rows > 1 ? var[j] / static_cast<double>(rows - 1) : biased;
      inv_std[j] = 1.0 / std::sqrt(biased + kBatchNormEps);
      rm[j] = (1.0 - kBatchNormMomentum) * rm[j] + kBatchNormMomentum * mu[j];
      rv[j] = (1.0 - kBatchNormMomentum) * rv[j] + kBatchNormMomentum * unbiased;
    }
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < features; ++j)
        normalized[i * features + j] = (xv[i * features + j] - mu[j]) * inv_std[j];
  } else {
    auto rm = running.mean.values();
    auto rv = running.var.values();
    for (std::size_t j = 0; j < features; ++j) inv_std[j] = 1.0 / std::sqrt(rv[j] + kBatchNormEps);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < features; ++j)
        normalized[i * features + j] = (xv[i * features + j] - rm[j]) * inv_std[j];
  }

  std::vector<double> out(rows * features);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < features; ++j)
      out[i * features + j] = gm[j] * normalized[i * features + j] + bt[j];

  Tensor result = make_output({rows, features}, std::move(out), {&x, &gamma, &beta});
  if (result.requires_grad()) {
    g.record(result, [x, gamma, beta, result, mode, rows, features,
                      normalized = std::move(normalized), inv_std = std::move(inv_std)]() mutable {
      auto gv = result.grad();
      auto gm = gamma.values();
      std::vector<double> sum_dy(features, 0.0), sum_dy_xn(features, 0.0);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < features; ++j) {
          const double dy = gv[i * features + j];
          sum_dy[j] += dy;
          sum_dy_xn[j] += dy * normalized[i * features + j];
        }
      if (gamma.requires_grad()) {
        auto gg = gamma.grad();
        for (std::size_t j = 0; j < features; ++j) gg[j] += sum_dy_xn[j];
      }
      if (beta.requires_grad()) {
        auto gb = beta.grad();
        for (std::size_t j = 0; j < features; ++j) gb[j] += sum_dy[j];
      }
      if (!x.requires_grad()) return;
      auto gx = x.grad();
      if (mode == Mode::kInfer) {
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < features; ++j)
            gx[i * features + j] += gv[i * features + j] * gm[j] * inv_std[j];
        return;
      }
      const double n = static_cast<double>(rows);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < features; ++j) {
          const double dxn = gv[i * features + j] * gm[j];
          const double mean_dxn = gm[j] * sum_dy[j] / n;
          const double mean_dxn_xn = gm[j] * sum_dy_xn[j] / n;
          gx[i * features + j] +=
              inv_std[j] * (dxn - mean_dxn - normalized[i * features + j] * mean_dxn_xn);
        }
    });
  }
  return result;
}

Tensor dropout(Graph& g, const Tensor& x, double rate, Mode mode) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::kInfer || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = g.rng().uniform() < rate ? 0.0 : keep_scale;
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  Tensor result = make_output(x.shape(), std::move(out), {&x});
  if (result.requires_grad()) {
    g.record(result, [x, result, mask = std::move(mask)]() mutable {
      auto gv = result.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i] * mask[i];
    });
  }
  return result;
}

Tensor relu(Graph& g, const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  Tensor result = make_output(x.shape(), std::move(out), {&x});
  if (result.requires_grad()) {
    g.record(result, [x, result]() mutable {
      auto gv = result.grad();
      auto xv = x.values();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gv.size(); ++i)
        if (xv[i] > 0.0) gx[i] += gv[i];
    });
  }
  return result;
}

Tensor sigmoid(Graph& g, const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  Tensor result = make_output(x.shape(), std::move(out), {&x});
  if (result.requires_grad()) {
    g.record(result, [x, result]() mutable {
      auto gv = result.grad();
      auto yv = result.values();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i] * yv[i] * (1.0 - yv[i]);
    });
  }
  return result;
}

Tensor softmax(Graph& g, const Tensor& x) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = &xv[r * cols];
    double* y = &out[r * cols];
    const double peak = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      y[c] = std::exp(in[c] - peak);
      total += y[c];
    }
    for (std::size_t c = 0; c < cols; ++c) y[c] /= total;
  }
  Tensor result = make_output(x.shape(), std::move(out), {&x});
  if (result.requires_grad()) {
    g.record(result, [x, result, rows, cols]() mutable {
      auto gv = result.grad();
      auto yv = result.values();
      auto gx = x.grad();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += gv[r * cols + c] * yv[r * cols + c];
        for (std::size_t c = 0; c < cols; ++c)
          gx[r * cols + c] += yv[r * cols + c] * (gv[r * cols + c] - dot);
      }
    });
  }
  return result;
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Tensor result = make_output(a.shape(), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    g.record(result, [a, b, result]() mutable {
      auto gv = result.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gv.size(); ++i) gb[i] += gv[i];
      }
    });
  }
  return result;
}

Tensor hadamard(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard", a, b);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  Tensor result = make_output(a.shape(), std::move(out), {&a, &b});
  if (result.requires_grad()) {
    g.record(result, [a, b, result]() mutable {
      auto gv = result.grad();
      auto av = a.values();
      auto bv = b.values();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gv.size(); ++i) gb[i] += gv[i] * av[i];
      }
    });
  }
  return result;
}

Tensor scale(Graph& g, const Tensor& x, double factor) {
  auto xv = x.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
  Tensor result = make_output(x.shape(), std::move(out), {&x});
  if (result.requires_grad()) {
    g.record(result, [x, result, factor]() mutable {
      auto gv = result.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i] * factor;
    });
  }
  return result;
}

Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias) {
  require_rank("add_bias", x, 2);
  require_rank("add_bias", bias, 1);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (bias.dim(0) != cols) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " for input " +
                         to_string(x.shape()));
  }
  auto xv = x.values();
  auto bv = bias.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = xv[i * cols + j] + bv[j];
  Tensor result = make_output(x.shape(), std::move(out), {&x, &bias});
  if (result.requires_grad()) {
    g.record(result, [x, bias, result, rows, cols]() mutable {
      auto gv = result.grad();
      if (x.requires_grad()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < gv.size(); ++i) gx[i] += gv[i];
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) gb[j] += gv[i * cols + j];
      }
    });
  }
  return result;
}

Tensor sum(Graph& g, const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor result = make_output({1}, {total}, {&x});
  if (result.requires_grad()) {
    g.record(result, [x, result]() mutable {
      const double go = result.grad()[0];
      for (double& gx : x.grad()) gx += go;
    });
  }
  return result;
}

Tensor mean(Graph& g, const Tensor& x) {
  return scale(g, sum(g, x), 1.0 / static_cast<double>(x.size()));
}

Tensor sad_loss(Graph& g, const Tensor& x, const Tensor& xhat) {
  require_same_shape("sad_loss", x, xhat);
  const RowView view = row_view("sad_loss", x);
  auto xv = x.values();
  auto yv = xhat.values();
  std::vector<double> out(view.rows);
  // Per row: dot, |x|, |xhat|, cosine, and whether the clamp was active.
  std::vector<double> dots(view.rows), nx(view.rows), ny(view.rows), cosines(view.rows);
  std::vector<char> clamped(view.rows, 0);
  for (std::size_t r = 0; r < view.rows; ++r) {
    double dot = 0.0, xx = 0.0, yy = 0.0;
    for (std::size_t c = 0; c < view.cols; ++c) {
      const double a = xv[r * view.cols + c], b = yv[r * view.cols + c];
      dot += a * b;
      xx += a * a;
      yy += b * b;
    }
    if (xx == 0.0 || yy == 0.0) {
      throw DegenerateError("sad_loss: zero-norm vector in row " + std::to_string(r));
    }
    nx[r] = std::sqrt(xx);
    ny[r] = std::sqrt(yy);
    dots[r] = dot;
    double cosine = dot / (nx[r] * ny[r]);
    const double lo = -1.0 + kCosineClamp, hi = 1.0 - kCosineClamp;
    if (cosine < lo || cosine > hi) {
      cosine = std::clamp(cosine, lo, hi);
      clamped[r] = 1;
    }
    cosines[r] = cosine;
    out[r] = std::acos(cosine);
  }
  Tensor result = make_output(row_result_shape(x), std::move(out), {&x, &xhat});
  if (result.requires_grad()) {
    g.record(result, [x, xhat, result, view, dots = std::move(dots), nx = std::move(nx),
                      ny = std::move(ny), cosines = std::move(cosines),
                      clamped = std::move(clamped)]() mutable {
      auto gv = result.grad();
      auto xv = x.values();
      auto yv = xhat.values();
      for (std::size_t r = 0; r < view.rows; ++r) {
        if (clamped[r]) continue;
        // d acos(c) = -dc / sqrt(1 - c^2)
        const double dacos = -gv[r] / std::sqrt(1.0 - cosines[r] * cosines[r]);
        const double denom = nx[r] * ny[r];
        // dc/dx = xhat / (|x||xhat|) - c x / |x|^2, symmetric for xhat.
        if (x.requires_grad()) {
          auto gx = x.grad();
          for (std::size_t c = 0; c < view.cols; ++c) {
            const std::size_t i = r * view.cols + c;
            gx[i] += dacos * (yv[i] / denom - cosines[r] * xv[i] / (nx[r] * nx[r]));
          }
        }
        if (xhat.requires_grad()) {
          auto gy = xhat.grad();
          for (std::size_t c = 0; c < view.cols; ++c) {
            const std::size_t i = r * view.cols + c;
            gy[i] += dacos * (xv[i] / denom - cosines[r] * yv[i] / (ny[r] * ny[r]));
          }
        }
      }
    });
  }
  return result;
}

Tensor lhalf_penalty(Graph& g, const Tensor& s) {
  const RowView view = row_view("lhalf_penalty", s);
  auto sv = s.values();
  std::vector<double> out(view.rows, 0.0);
  for (std::size_t r = 0; r < view.rows; ++r) {
    for (std::size_t c = 0; c < view.cols; ++c) {
      const double v = sv[r * view.cols + c];
      if (!(v >= 0.0)) {
        throw DomainError("lhalf_penalty: negative or NaN abundance " + std::to_string(v));
      }
      out[r] += std::sqrt(v + kSqrtSmoothing);
    }
  }
  Tensor result = make_output(row_result_shape(s), std::move(out), {&s});
  if (result.requires_grad()) {
    g.record(result, [s, result, view]() mutable {
      auto gv = result.grad();
      auto sv = s.values();
      auto gs = s.grad();
      for (std::size_t r = 0; r < view.rows; ++r)
        for (std::size_t c = 0; c < view.cols; ++c) {
          const std::size_t i = r * view.cols + c;
          gs[i] += gv[r] * 0.5 / std::sqrt(sv[i] + kSqrtSmoothing);
        }
    });
  }
  return result;
}

}  // namespace dsanet::ad
