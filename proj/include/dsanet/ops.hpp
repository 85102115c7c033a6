#pragma once

#include <span>

#include "dsanet/tensor.hpp"

namespace dsanet::ad {

// Numerical constants shared by every layer and metric.
inline constexpr double kCosineClamp = 1e-7;     // sad_loss: cosine kept in [-1+c, 1-c]
inline constexpr double kSqrtSmoothing = 1e-12;  // lhalf_penalty: sqrt(s + eps)
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Exponential moving averages tracked by a batch-norm layer.
struct RunningStats {
  Tensor mean;  // [D], starts at 0
  Tensor var;   // [D], starts at 1

  static RunningStats fresh(std::size_t features);
};

// a[m x k] . b[k x n]
Tensor matmul(Graph& g, const Tensor& a, const Tensor& b);
// 2-D transpose.
Tensor transpose(Graph& g, const Tensor& a);
// Same values, new shape of equal element count.
Tensor reshape(Graph& g, const Tensor& a, Shape shape);
// [B x R x C] -> [B x C x R]
Tensor swap_last_axes(Graph& g, const Tensor& a);
// x[B x D] restricted to the listed columns, in the listed order.
Tensor select_columns(Graph& g, const Tensor& x, std::span<const std::size_t> columns);

// 1-D convolution whose kernels span the full input length, so each output
// channel collapses the whole sequence to one value:
//   out[o] = sum_{c,t} kernels[o,c,t] * input[c,t] + bias[o]
// input is [C_in x K] (output [C_out]) or batched [B x C_in x K]
// (output [B x C_out]); kernels are [C_out x C_in x K].
Tensor conv1d(Graph& g, const Tensor& input, const Tensor& kernels, const Tensor& bias);

// Batch normalization over the rows of x[B x D]. Train mode normalizes with
// the batch statistics and updates `running`; infer mode uses `running`.
Tensor batchnorm(Graph& g, const Tensor& x, const Tensor& gamma, const Tensor& beta, Mode mode,
                 RunningStats& running);

// Inverted dropout; identity when rate is 0 or in infer mode.
Tensor dropout(Graph& g, const Tensor& x, double rate, Mode mode);

Tensor relu(Graph& g, const Tensor& x);
Tensor sigmoid(Graph& g, const Tensor& x);
// Softmax over the last axis.
Tensor softmax(Graph& g, const Tensor& x);
Tensor add(Graph& g, const Tensor& a, const Tensor& b);
Tensor hadamard(Graph& g, const Tensor& a, const Tensor& b);
Tensor scale(Graph& g, const Tensor& x, double factor);
// x[B x D] + bias[D] on every row.
Tensor add_bias(Graph& g, const Tensor& x, const Tensor& bias);
Tensor sum(Graph& g, const Tensor& x);
Tensor mean(Graph& g, const Tensor& x);

// Spectral angle arccos(<x, xhat> / (|x| |xhat|)) with the cosine clamped by
// kCosineClamp. Vectors [L] give a scalar; matrices [B x L] give one angle
// per row ([B]).
Tensor sad_loss(Graph& g, const Tensor& x, const Tensor& xhat);

// Smoothed L1/2 quasi-norm sum_p sqrt(s_p + kSqrtSmoothing). [P] gives a
// scalar, [B x P] one value per row.
Tensor lhalf_penalty(Graph& g, const Tensor& s);

}  // namespace dsanet::ad
