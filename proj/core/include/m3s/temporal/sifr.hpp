// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "m3s/nn/attention.hpp"
#include "m3s/nn/layers.hpp"

namespace m3s::temporal {

/// [ceil(n/2), n] matrix averaging non-overlapping pairs; an odd tail is
/// its own pool of size one.
Tensor pooling_matrix(std::size_t n);

/// X_0 [L, V] -> {X_0, ..., X_M}; throws ConfigError when L < 2^M.
std::vector<Tensor> build_pyramid(const Tensor& x0, std::size_t scales);

/// Self-attention across variables: each variable's length-L series is one
/// token. Output = input + attention, same shape [L, V].
struct ChannelSelfAttention {
  ChannelSelfAttention() = default;
  ChannelSelfAttention(nn::ParamBuilder pb, std::size_t length);
  Tensor operator()(const Tensor& x) const;

  nn::Linear q, k, v;
};

/// Shared Linear(V -> d_model) applied at every scale plus sinusoidal
/// positions of that scale.
struct PyramidEmbedding {
  PyramidEmbedding() = default;
  PyramidEmbedding(nn::ParamBuilder pb, std::size_t variables, std::size_t d_model);
  std::vector<Tensor> operator()(const std::vector<Tensor>& scales) const;

  nn::Linear embed;
};

struct Period {
  std::size_t frequency;
  std::size_t period;
  double amplitude;
};

struct PeriodSet {
  std::vector<Period> periods;  // descending amplitude, ties to lower frequency
  Tensor amplitudes;            // [k], differentiable w.r.t. the input
};

/// Top-k non-DC frequencies of the channel-mean amplitude spectrum of x [L, C].
/// k is clamped to the available bins; throws ConfigError when L < 4 or k = 0.
PeriodSet extract_periods(const Tensor& x, std::size_t k);

/// Coarsest-scale period mapped to scale m: p * 2^(M - m), clipped to [2, L_m].
std::size_t period_at_scale(std::size_t period, std::size_t m, std::size_t scales, std::size_t length);

/// x [L, C] -> [p, ceil(L/p), C]; Z[r][c] = x[c*p + r], zero beyond L.
Tensor to_2d(const Tensor& x, std::size_t period);
/// Inverse of to_2d, dropping the padding: [p, f, C] -> [length, C].
Tensor from_2d(const Tensor& z, std::size_t length);

/// Pre-norm attention block over a [P, F, C] image: the token groups decide
/// whether it is the dense (windowed) or sparse (strided) variant.
struct MsaBlock {
  MsaBlock() = default;
  MsaBlock(nn::ParamBuilder pb, std::size_t channels, std::size_t heads);
  Tensor operator()(const Tensor& z, const nn::AttentionGroups& groups) const;

  nn::LayerNorm ln_attn, ln_ffn;
  nn::MultiHeadAttention attn;
  nn::Mlp ffn;
};

Tensor dense_msa(const MsaBlock& block, const Tensor& z, std::size_t window);
Tensor sparse_msa(const MsaBlock& block, const Tensor& z, std::size_t interval);

/// Alternating dense and sparse blocks, `depth` pairs.
struct RetractableAttention {
  RetractableAttention() = default;
  RetractableAttention(nn::ParamBuilder pb, std::size_t channels, std::size_t heads, std::size_t depth,
                       std::size_t window, std::size_t interval);
  Tensor operator()(const Tensor& z) const;

  std::vector<MsaBlock> dense, sparse;
  std::size_t window = 1, interval = 1;
};

/// sum_k softmax(amplitudes)_k * views[k].
Tensor fuse_amplitude_weighted(const std::vector<Tensor>& views, const Tensor& amplitudes);

/// Per-scale time-linear maps L_m -> L + horizon, averaged.
struct EnsembleHeads {
  EnsembleHeads() = default;
  /// `first_scale` > 0 drops the finer heads (coarsest-only ablation).
  EnsembleHeads(nn::ParamBuilder pb, const std::vector<std::size_t>& scale_lengths, std::size_t out_length,
                std::size_t first_scale = 0);
  /// hs[m] is [L_m, d]; returns [out_length, d].
  Tensor operator()(const std::vector<Tensor>& hs) const;
  Tensor head(std::size_t m, const Tensor& h) const;

  std::vector<Tensor> weights;  // [out_length, L_m]; undefined for dropped scales
  std::vector<Tensor> biases;   // [out_length, 1]
  std::size_t first_scale = 0;
};

struct SifrConfig {
  std::size_t lookback = 96;
  std::size_t horizon = 6;
  std::size_t variables = 8;
  std::size_t d_model = 128;
  std::size_t scales = 2;
  std::size_t top_k = 3;
  std::size_t window = 4;
  std::size_t interval = 4;
  std::size_t depth = 2;
  std::size_t heads = 4;
  bool coarsest_head_only = false;
};

struct TemporalOutput {
  Tensor x_i;  // [lookback + horizon, d_model]
  PeriodSet periods;
};

struct SifrNet {
  SifrNet() = default;
  SifrNet(nn::ParamBuilder pb, const SifrConfig& cfg);
  /// x0 [lookback, variables] -> X_I.
  TemporalOutput operator()(const Tensor& x0) const;

  SifrConfig cfg;
  ChannelSelfAttention csa;
  PyramidEmbedding embedding;
  RetractableAttention ra;
  EnsembleHeads heads;
};

/// Lengths ceil(L / 2^m) for m = 0..scales.
std::vector<std::size_t> pyramid_lengths(std::size_t length, std::size_t scales);

}  // namespace m3s::temporal
