// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <utility>

#include "m3s/fusion/ssm.hpp"
#include "m3s/nn/layers.hpp"

namespace m3s::visual {

inline constexpr std::size_t kSegClasses = 4;  // white cloud, gray cloud, sun, background

struct ScsmConfig {
  std::size_t k1 = 3, dilation1 = 1;
  std::size_t k2 = 5, dilation2 = 2;
  /// Fraction of channels handled by the partial operator.
  double ratio = 0.25;
  double lambda_init = 1.0;

  /// ceil(ratio * channels); throws ConfigError when it is not in [1, channels].
  std::size_t partial_channels(std::size_t channels) const;
};

/// Depthwise dilated convolutions of both kernel sizes, spatial size kept.
std::pair<Tensor, Tensor> decompose_multiscale(const Tensor& x, const nn::Conv2d& dw1, const nn::Conv2d& dw2);

/// NCHW -> [N*H*W, C] token rows and back.
Tensor to_tokens(const Tensor& x);
Tensor from_tokens(const Tensor& t, std::size_t n, std::size_t h, std::size_t w);

/// Cross-scale interaction attention. Q, V1 come from the small-kernel map,
/// K, V2 from the large-kernel map; spatial positions of each frame are the
/// tokens. Output has 2C channels.
struct Csia {
  Csia() = default;
  Csia(nn::ParamBuilder pb, std::size_t channels);
  Tensor operator()(const Tensor& xk1, const Tensor& xk2) const;

  nn::Conv2d q, k, v1, v2;
};

/// Screening (sigmoid-gated) and enhancement (softmax-scaled) channel
/// branches merged through lambda and a 1x1 convolution back to C channels.
struct ChannelExcitation {
  ChannelExcitation() = default;
  ChannelExcitation(nn::ParamBuilder pb, std::size_t channels, double lambda_init);
  /// x_a: [N, 2C, H, W] -> [N, C, H, W].
  Tensor operator()(const Tensor& x_a) const;
  /// Sigmoid gate [N, 2C] of the screening branch.
  Tensor screening_weights(const Tensor& pooled) const;
  /// Softmax weights [N, 2C] of the enhancement branch.
  static Tensor enhancement_weights(const Tensor& pooled);

  nn::Linear squeeze, excite;
  Tensor lambda;
  nn::Conv2d fuse;
};

/// Convolution on the first `partial` channels, identity on the rest.
struct PartialConv {
  PartialConv() = default;
  PartialConv(nn::ParamBuilder pb, std::size_t channels, std::size_t partial);
  Tensor operator()(const Tensor& x) const;

  nn::Conv2d conv;
  std::size_t channels = 0, partial = 0;
};

/// Single-head spatial self-attention on the first `partial` channels with
/// 1x1 projections, identity on the rest.
struct PartialAttention {
  PartialAttention() = default;
  PartialAttention(nn::ParamBuilder pb, std::size_t channels, std::size_t partial);
  Tensor operator()(const Tensor& x) const;

  nn::Linear q, k, v;
  std::size_t channels = 0, partial = 0;
};

enum class BlockKind { Mspc, Mspa };

/// One encoder stage: partial operator, DW+GeLU stem, multi-scale split,
/// spatial-channel selection (or a plain merge when `selection` is false),
/// residual, and a stride-2 downsample to twice the channels.
struct ScsmBlock {
  ScsmBlock() = default;
  ScsmBlock(nn::ParamBuilder pb, BlockKind kind, std::size_t channels, const ScsmConfig& cfg, bool selection = true);
  Tensor operator()(const Tensor& x) const;
  /// Output of the stage before the downsample.
  Tensor body(const Tensor& x) const;

  BlockKind kind = BlockKind::Mspc;
  bool selection = true;
  std::size_t channels = 0;
  PartialConv pconv;
  PartialAttention pattn;
  nn::Conv2d stem, dw1, dw2;
  Csia csia;
  ChannelExcitation ce;
  nn::Conv2d merge;  // selection == false
  nn::Conv2d down;
};

enum class EncoderKind {
  Mpcs,  // MSPC x3 + MSPA with spatial-channel selection
  MpcmLike,  // same stages with the selection replaced by a concat merge
  Plain,  // strided 3x3 conv + GeLU stages
};

using EncoderFeatures = std::array<Tensor, 5>;

struct VisualEncoder {
  VisualEncoder() = default;
  VisualEncoder(nn::ParamBuilder pb, EncoderKind kind, std::size_t width, const ScsmConfig& cfg);
  /// images [N, 3, H, W] with H, W divisible by 32 -> f1..f5.
  EncoderFeatures operator()(const Tensor& images) const;

  EncoderKind kind = EncoderKind::Mpcs;
  std::size_t width = 0;
  nn::Conv2d stem;
  std::array<ScsmBlock, 4> blocks;
  std::array<nn::Conv2d, 4> plain;
};

struct DecoderOutput {
  Tensor rows;  // [N, d_model]
  Tensor d1;    // [N, 2*width, H/2, W/2]
};

struct VisualDecoder {
  VisualDecoder() = default;
  VisualDecoder(nn::ParamBuilder pb, std::size_t width, std::size_t d_model, std::size_t state);
  DecoderOutput operator()(const EncoderFeatures& f) const;

  std::size_t width = 0;
  nn::Conv2d lateral5;
  std::array<nn::Conv2d, 4> lateral;  // produce u4, u3, u2, u1
  nn::Conv2d aggregate;
  fusion::SelectiveSsm m2b;
  nn::Mlp reduce;
};

/// 1x1 conv to class logits, bilinear resize to the image size.
struct SegmentationHead {
  SegmentationHead() = default;
  SegmentationHead(nn::ParamBuilder pb, std::size_t in_channels);
  Tensor operator()(const Tensor& d1, std::size_t h, std::size_t w) const;

  nn::Conv2d conv;
};

struct VisualOutput {
  Tensor x_s;         // [frames, d_model]
  Tensor seg_logits;  // [frames, 4, H, W]
};

/// Per-frame encoder/decoder; frames form the batch axis, so rows of X_S
/// follow any permutation of the input frames.
struct VisualBranch {
  VisualBranch() = default;
  VisualBranch(nn::ParamBuilder pb, EncoderKind kind, std::size_t width, std::size_t d_model, std::size_t state,
               const ScsmConfig& cfg = {});
  VisualOutput operator()(const Tensor& frames) const;

  VisualEncoder encoder;
  VisualDecoder decoder;
  SegmentationHead seg;
};

}  // namespace m3s::visual
