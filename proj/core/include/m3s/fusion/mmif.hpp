// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>

#include "m3s/fusion/ssm.hpp"
#include "m3s/nn/attention.hpp"

namespace m3s::fusion {

/// Pads the visual sequence to the temporal length by repeating its last row.
/// Throws ContractError when either input is empty or X_S is the longer one.
std::pair<Tensor, Tensor> align_lengths(const Tensor& x_s, const Tensor& x_i);

/// Repeats the first row of `x` in front until it has `length` rows.
Tensor left_pad_replicate(const Tensor& x, std::size_t length);

/// One pre-norm decoder layer over `horizon` learned query slots:
/// causal self-attention, cross-attention to the fused memory, feed-forward.
struct ForecastDecoder {
  ForecastDecoder() = default;
  ForecastDecoder(nn::ParamBuilder pb, std::size_t dim, std::size_t horizon, std::size_t heads);
  /// memory [Lf, dim] -> [horizon, 1] (normalized units).
  Tensor operator()(const Tensor& memory) const;
  /// Same as operator() but with explicit query slots in place of `queries`.
  Tensor decode(const Tensor& queries, const Tensor& memory) const;

  Tensor queries;  // [horizon, dim]
  nn::LayerNorm ln_self, ln_cross, ln_ffn;
  nn::MultiHeadAttention self_attn, cross_attn;
  nn::Mlp ffn;
  nn::Linear head;
  std::size_t horizon = 0;
};

enum class FusionMode {
  CrossScan,     // paired selective scans with swapped C, then Linear(Cat)
  LinearConcat,  // Linear(Cat(X_S, X_I))
  MlpConcat,     // Linear -> GeLU -> Linear on Cat(X_S, X_I)
  TemporalOnly,  // Linear(X_I); no visual input
};

/// Fusion of aligned modal features followed by the forecast decoder.
struct FusionHead {
  FusionHead() = default;
  FusionHead(nn::ParamBuilder pb, FusionMode mode, std::size_t dim, std::size_t state, std::size_t horizon,
             std::size_t heads);
  /// x_s may be undefined for TemporalOnly. Returns [horizon, 1].
  Tensor operator()(const Tensor& x_s, const Tensor& x_i) const;
  /// The fused memory H_fusion before decoding.
  Tensor fuse(const Tensor& x_s, const Tensor& x_i) const;

  FusionMode mode = FusionMode::CrossScan;
  SelectiveSsm ssm_s, ssm_i;
  nn::Linear project;
  nn::Mlp mlp;
  ForecastDecoder decoder;
};

}  // namespace m3s::fusion
