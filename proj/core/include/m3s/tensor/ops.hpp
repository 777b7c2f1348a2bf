// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "m3s/tensor/tensor.hpp"

namespace m3s {

// Elementwise. Binary ops broadcast numpy-style (right-aligned, size-1 axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// x * Phi(x) with the exact erf form of the normal CDF.
Tensor gelu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
/// Population variance along `axis`.
Tensor variance_axis(const Tensor& x, std::size_t axis, bool keepdim = false);

// Shape and indexing.
Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// out[..., i, ...] = x[..., index[i], ...]; an index of -1 yields zeros.
Tensor gather(const Tensor& x, std::size_t axis, const std::vector<std::int64_t>& index);
/// out[..., index[i], ...] += x[..., i, ...] into an axis of length `size`;
/// an index of -1 drops the slice.
Tensor scatter_add(const Tensor& x, std::size_t axis, const std::vector<std::int64_t>& index, std::size_t size);

// Linear algebra. Supports [M,K]x[K,N], [B,M,K]x[B,K,N] and [B,M,K]x[K,N].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Numerically shifted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// Normalizes over the last axis, then applies gamma/beta of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
};

/// Cross-correlation of x [N,Cin,H,W] with w [Cout,Cin/groups,kh,kw].
Tensor conv2d(const Tensor& x, const Tensor& w, const Conv2dOptions& opt = {});
/// Half-pixel-centre bilinear resize of x [N,C,H,W].
Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);
/// [N,C,H,W] -> [N,C].
Tensor global_avg_pool(const Tensor& x);

/// Magnitudes |X_f| of the DFT along `axis` for bins 0..floor(L/2).
Tensor rfft_amplitudes(const Tensor& x, std::size_t axis);

// Losses, both reduced by the mean.
Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

}  // namespace m3s
