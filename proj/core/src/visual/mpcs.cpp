// SPDX-License-Identifier: Apache-2.0
#include "m3s/visual/mpcs.hpp"

#include <cmath>

#include "m3s/error.hpp"
#include "m3s/nn/attention.hpp"

namespace m3s::visual {

namespace {

Conv2dOptions padded(std::size_t padding, std::size_t stride = 1) {
  Conv2dOptions o;
  o.padding = padding;
  o.stride = stride;
  return o;
}

void require_nchw(const Tensor& x, std::size_t channels, const char* what) {
  if (x.rank() != 4 || x.dim(1) != channels) {
    throw ShapeError(std::string(what) + ": expected [N, " + std::to_string(channels) + ", H, W], got " +
                     shape_str(x.shape()));
  }
}

// Runs `op` on the first `partial` channels and re-attaches the remainder.
template <class Op>
Tensor on_leading_channels(const Tensor& x, std::size_t partial, Op op) {
  const std::size_t c = x.dim(1);
  if (partial == c) return op(x);
  Tensor head = op(slice(x, 1, 0, partial));
  return concat({head, slice(x, 1, partial, c - partial)}, 1);
}

}  // namespace

std::size_t ScsmConfig::partial_channels(std::size_t channels) const {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("partial ratio must lie in (0, 1]");
  const auto p = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(channels) - 1e-9));
  if (p < 1 || p > channels) throw ConfigError("partial ratio selects no channels");
  return p;
}

std::pair<Tensor, Tensor> decompose_multiscale(const Tensor& x, const nn::Conv2d& dw1, const nn::Conv2d& dw2) {
  return {dw1(x), dw2(x)};
}

Tensor to_tokens(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  return reshape(permute(x, {0, 2, 3, 1}), {n * h * w, c});
}

Tensor from_tokens(const Tensor& t, std::size_t n, std::size_t h, std::size_t w) {
  const std::size_t c = t.dim(1);
  return permute(reshape(t, {n, h, w, c}), {0, 3, 1, 2});
}

Csia::Csia(nn::ParamBuilder pb, std::size_t channels)
    : q(nn::Conv2d::depthwise(pb.sub("q"), channels, 3)),
      k(nn::Conv2d::depthwise(pb.sub("k"), channels, 3)),
      v1(nn::Conv2d::depthwise(pb.sub("v1"), channels, 3)),
      v2(nn::Conv2d::depthwise(pb.sub("v2"), channels, 3)) {}

Tensor Csia::operator()(const Tensor& xk1, const Tensor& xk2) const {
  if (xk1.shape() != xk2.shape() || xk1.rank() != 4) throw ShapeError("csia: scale maps must share a 4-D shape");
  const std::size_t n = xk1.dim(0), h = xk1.dim(2), w = xk1.dim(3);
  const Tensor qt = to_tokens(q(xk1));
  const Tensor kt = to_tokens(k(xk2));
  // A V1 and A V2 share one attention map, so both value paths are attended
  // together as one 2C-wide value matrix.
  const Tensor vt = concat({to_tokens(v1(xk1)), to_tokens(v2(xk2))}, 1);
  const Tensor out = nn::grouped_attention(qt, kt, vt, nn::block_groups(n, h * w));
  return from_tokens(out, n, h, w);
}

ChannelExcitation::ChannelExcitation(nn::ParamBuilder pb, std::size_t channels, double lambda_init) {
  const std::size_t wide = 2 * channels;
  const std::size_t hidden = std::max<std::size_t>(1, wide / 4);
  squeeze = nn::Linear(pb.sub("squeeze"), wide, hidden);
  excite = nn::Linear(pb.sub("excite"), hidden, wide);
  lambda = pb.constant("lambda", {1}, lambda_init);
  fuse = nn::Conv2d(pb.sub("fuse"), 2 * wide, channels, 1);
}

Tensor ChannelExcitation::screening_weights(const Tensor& pooled) const {
  return sigmoid(excite(gelu(squeeze(pooled))));
}

Tensor ChannelExcitation::enhancement_weights(const Tensor& pooled) { return softmax(pooled, 1); }

Tensor ChannelExcitation::operator()(const Tensor& x_a) const {
  require_nchw(x_a, squeeze.in, "channel excitation");
  const std::size_t n = x_a.dim(0), c2 = x_a.dim(1);
  const Tensor pooled = global_avg_pool(x_a);
  const Tensor x_cf = mul(x_a, reshape(screening_weights(pooled), {n, c2, 1, 1}));
  const Tensor x_cs = mul(x_a, reshape(enhancement_weights(pooled), {n, c2, 1, 1}));
  const Tensor gate = mul(concat({x_cs, x_cf}, 1), lambda);
  // X_A has half the channels of the gate; it multiplies both halves.
  return fuse(mul(concat({x_a, x_a}, 1), gate));
}

PartialConv::PartialConv(nn::ParamBuilder pb, std::size_t channels_, std::size_t partial_)
    : conv(pb.sub("conv"), partial_, partial_, 3, padded(1)), channels(channels_), partial(partial_) {}

Tensor PartialConv::operator()(const Tensor& x) const {
  require_nchw(x, channels, "partial conv");
  return on_leading_channels(x, partial, [this](const Tensor& h) { return conv(h); });
}

PartialAttention::PartialAttention(nn::ParamBuilder pb, std::size_t channels_, std::size_t partial_)
    : q(pb.sub("q"), partial_, partial_),
      k(pb.sub("k"), partial_, partial_),
      v(pb.sub("v"), partial_, partial_),
      channels(channels_),
      partial(partial_) {}

Tensor PartialAttention::operator()(const Tensor& x) const {
  require_nchw(x, channels, "partial attention");
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  return on_leading_channels(x, partial, [&](const Tensor& part) {
    const Tensor t = to_tokens(part);
    const Tensor y = nn::grouped_attention(q(t), k(t), v(t), nn::block_groups(n, h * w));
    return from_tokens(y, n, h, w);
  });
}

ScsmBlock::ScsmBlock(nn::ParamBuilder pb, BlockKind kind_, std::size_t channels_, const ScsmConfig& cfg,
                     bool selection_)
    : kind(kind_), selection(selection_), channels(channels_) {
  const std::size_t p = cfg.partial_channels(channels);
  if (kind == BlockKind::Mspc) {
    pconv = PartialConv(pb.sub("pconv"), channels, p);
  } else {
    pattn = PartialAttention(pb.sub("pattn"), channels, p);
  }
  stem = nn::Conv2d::depthwise(pb.sub("stem"), channels, 3);
  dw1 = nn::Conv2d::depthwise(pb.sub("dw1"), channels, cfg.k1, cfg.dilation1);
  dw2 = nn::Conv2d::depthwise(pb.sub("dw2"), channels, cfg.k2, cfg.dilation2);
  if (selection) {
    csia = Csia(pb.sub("csia"), channels);
    ce = ChannelExcitation(pb.sub("ce"), channels, cfg.lambda_init);
  } else {
    merge = nn::Conv2d(pb.sub("merge"), 2 * channels, channels, 1);
  }
  down = nn::Conv2d(pb.sub("down"), channels, 2 * channels, 3, padded(1, 2));
}

Tensor ScsmBlock::body(const Tensor& x) const {
  require_nchw(x, channels, "encoder stage");
  const Tensor p = kind == BlockKind::Mspc ? pconv(x) : pattn(x);
  const Tensor s = gelu(stem(p));
  auto [xk1, xk2] = decompose_multiscale(s, dw1, dw2);
  const Tensor sel = selection ? ce(csia(xk1, xk2)) : merge(concat({xk1, xk2}, 1));
  return add(x, sel);
}

Tensor ScsmBlock::operator()(const Tensor& x) const { return gelu(down(body(x))); }

VisualEncoder::VisualEncoder(nn::ParamBuilder pb, EncoderKind kind_, std::size_t width_, const ScsmConfig& cfg)
    : kind(kind_), width(width_) {
  if (width == 0) throw ConfigError("visual width must be positive");
  stem = nn::Conv2d(pb.sub("stem"), 3, width, 3, padded(1, 2));
  std::size_t c = width;
  for (std::size_t i = 0; i < 4; ++i, c *= 2) {
    auto sub = pb.sub("stage" + std::to_string(i + 1));
    if (kind == EncoderKind::Plain) {
      plain[i] = nn::Conv2d(sub, c, 2 * c, 3, padded(1, 2));
    } else {
      const BlockKind bk = i < 3 ? BlockKind::Mspc : BlockKind::Mspa;
      blocks[i] = ScsmBlock(sub, bk, c, cfg, kind == EncoderKind::Mpcs);
    }
  }
}

EncoderFeatures VisualEncoder::operator()(const Tensor& images) const {
  require_nchw(images, 3, "visual encoder");
  const std::size_t h = images.dim(2), w = images.dim(3);
  if (h % 32 != 0 || w % 32 != 0) {
    throw ShapeError("image height and width must be divisible by 32, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  EncoderFeatures f;
  f[0] = gelu(stem(images));
  for (std::size_t i = 0; i < 4; ++i) {
    f[i + 1] = kind == EncoderKind::Plain ? gelu(plain[i](f[i])) : blocks[i](f[i]);
  }
  return f;
}

VisualDecoder::VisualDecoder(nn::ParamBuilder pb, std::size_t width_, std::size_t d_model, std::size_t state)
    : width(width_) {
  lateral5 = nn::Conv2d(pb.sub("lateral5"), 16 * width, width, 1);
  // u_i merges the upsampled u_{i+1} (width channels) with f_i.
  const std::array<std::size_t, 4> f_channels = {8 * width, 4 * width, 2 * width, width};
  for (std::size_t j = 0; j < 4; ++j) {
    lateral[j] = nn::Conv2d(pb.sub("lateral" + std::to_string(4 - j)), width + f_channels[j], width, 1);
  }
  aggregate = nn::Conv2d(pb.sub("aggregate"), 4 * width, width, 1);
  m2b = fusion::SelectiveSsm(pb.sub("m2b"), width, state);
  reduce = nn::Mlp(pb.sub("reduce"), 2 * width, d_model, d_model);
}

DecoderOutput VisualDecoder::operator()(const EncoderFeatures& f) const {
  auto up_to = [](const Tensor& x, const Tensor& ref) { return upsample_bilinear(x, ref.dim(2), ref.dim(3)); };
  // u[4] = u5 ... u[0] = u1
  std::array<Tensor, 5> u;
  u[4] = lateral5(f[4]);
  for (std::size_t j = 0; j < 4; ++j) {
    const std::size_t i = 3 - j;
    u[i] = gelu(lateral[j](concat({up_to(u[i + 1], f[i]), f[i]}, 1)));
  }
  const Tensor agg =
      aggregate(concat({u[1], up_to(u[2], u[1]), up_to(u[3], u[1]), up_to(u[4], u[1])}, 1));
  const std::size_t n = agg.dim(0), h = agg.dim(2), w = agg.dim(3);
  const Tensor tokens = to_tokens(agg);
  std::vector<Tensor> scanned;
  scanned.reserve(n);
  for (std::size_t b = 0; b < n; ++b) scanned.push_back(m2b(slice(tokens, 0, b * h * w, h * w)));
  const Tensor f_s = from_tokens(concat(scanned, 0), n, h, w);
  DecoderOutput out;
  out.d1 = concat({up_to(f_s, u[0]), u[0]}, 1);
  out.rows = reduce(global_avg_pool(out.d1));
  return out;
}

SegmentationHead::SegmentationHead(nn::ParamBuilder pb, std::size_t in_channels)
    : conv(pb.sub("conv"), in_channels, kSegClasses, 1) {}

Tensor SegmentationHead::operator()(const Tensor& d1, std::size_t h, std::size_t w) const {
  return upsample_bilinear(conv(d1), h, w);
}

VisualBranch::VisualBranch(nn::ParamBuilder pb, EncoderKind kind, std::size_t width, std::size_t d_model,
                           std::size_t state, const ScsmConfig& cfg)
    : encoder(pb.sub("encoder"), kind, width, cfg),
      decoder(pb.sub("decoder"), width, d_model, state),
      seg(pb.sub("seg"), 2 * width) {}

VisualOutput VisualBranch::operator()(const Tensor& frames) const {
  const auto feats = encoder(frames);
  const auto dec = decoder(feats);
  return {dec.rows, seg(dec.d1, frames.dim(2), frames.dim(3))};
}

}  // namespace m3s::visual
