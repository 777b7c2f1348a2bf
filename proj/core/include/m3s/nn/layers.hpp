// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "m3s/nn/parameters.hpp"
#include "m3s/tensor/ops.hpp"

namespace m3s::nn {

/// y = x W + b over the last axis of x; W is [in, out].
struct Linear {
  Linear() = default;
  Linear(ParamBuilder pb, std::size_t in, std::size_t out, bool bias = true);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;
  Tensor bias;  // undefined when constructed without bias
  std::size_t in = 0, out = 0;
};

/// conv2d plus per-channel bias on NCHW input.
struct Conv2d {
  Conv2d() = default;
  Conv2d(ParamBuilder pb, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Conv2dOptions opt = {},
         bool bias = true);
  /// Depthwise kernel with "same" padding for odd kernels at stride 1.
  static Conv2d depthwise(ParamBuilder pb, std::size_t channels, std::size_t kernel, std::size_t dilation = 1);
  Tensor operator()(const Tensor& x) const;

  Tensor weight;
  Tensor bias;
  Conv2dOptions opt;
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParamBuilder pb, std::size_t dim);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

  Tensor gamma;
  Tensor beta;
};

/// Linear -> GeLU -> Linear.
struct Mlp {
  Mlp() = default;
  Mlp(ParamBuilder pb, std::size_t in, std::size_t hidden, std::size_t out);
  Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }

  Linear fc1;
  Linear fc2;
};

/// Sinusoidal position table [length, dim].
Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

}  // namespace m3s::nn
