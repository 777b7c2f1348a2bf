// SPDX-License-Identifier: Apache-2.0
#include "m3s/fusion/mmif.hpp"

#include <numeric>

#include "m3s/error.hpp"

namespace m3s::fusion {

std::pair<Tensor, Tensor> align_lengths(const Tensor& x_s, const Tensor& x_i) {
  if (!x_s.defined() || !x_i.defined()) throw ContractError("align_lengths: missing modal feature");
  if (x_s.rank() != 2 || x_i.rank() != 2 || x_s.dim(1) != x_i.dim(1)) {
    throw ShapeError("align_lengths: features must be [L, d] with equal widths");
  }
  const std::size_t ls = x_s.dim(0), li = x_i.dim(0);
  if (ls > li) throw ContractError("align_lengths: visual sequence longer than temporal sequence");
  if (ls == li) return {x_s, x_i};
  std::vector<std::int64_t> idx(li);
  for (std::size_t r = 0; r < li; ++r) idx[r] = static_cast<std::int64_t>(std::min(r, ls - 1));
  return {gather(x_s, 0, idx), x_i};
}

Tensor left_pad_replicate(const Tensor& x, std::size_t length) {
  const std::size_t l = x.dim(0);
  if (l >= length) return x;
  std::vector<std::int64_t> idx(length);
  for (std::size_t r = 0; r < length; ++r) idx[r] = r + l < length ? 0 : static_cast<std::int64_t>(r + l - length);
  return gather(x, 0, idx);
}

ForecastDecoder::ForecastDecoder(nn::ParamBuilder pb, std::size_t dim, std::size_t horizon_, std::size_t heads)
    : horizon(horizon_) {
  if (horizon == 0) throw ConfigError("forecast horizon must be at least 1");
  queries = pb.uniform("queries", {horizon, dim}, -0.5, 0.5);
  ln_self = nn::LayerNorm(pb.sub("ln_self"), dim);
  self_attn = nn::MultiHeadAttention(pb.sub("self_attn"), dim, heads);
  ln_cross = nn::LayerNorm(pb.sub("ln_cross"), dim);
  cross_attn = nn::MultiHeadAttention(pb.sub("cross_attn"), dim, heads);
  ln_ffn = nn::LayerNorm(pb.sub("ln_ffn"), dim);
  ffn = nn::Mlp(pb.sub("ffn"), dim, 4 * dim, dim);
  head = nn::Linear(pb.sub("head"), dim, 1);
}

Tensor ForecastDecoder::decode(const Tensor& q0, const Tensor& memory) const {
  const auto self_groups = nn::block_groups(1, horizon);
  const auto cross_groups = nn::cross_block_groups(1, horizon, memory.dim(0));
  const Tensor qn = ln_self(q0);
  Tensor q = add(q0, self_attn(qn, qn, self_groups, true));
  q = add(q, cross_attn(ln_cross(q), memory, cross_groups));
  q = add(q, ffn(ln_ffn(q)));
  return head(q);
}

Tensor ForecastDecoder::operator()(const Tensor& memory) const { return decode(queries, memory); }

FusionHead::FusionHead(nn::ParamBuilder pb, FusionMode mode_, std::size_t dim, std::size_t state, std::size_t horizon,
                       std::size_t heads)
    : mode(mode_) {
  switch (mode) {
    case FusionMode::CrossScan:
      ssm_s = SelectiveSsm(pb.sub("ssm_s"), dim, state);
      ssm_i = SelectiveSsm(pb.sub("ssm_i"), dim, state);
      project = nn::Linear(pb.sub("project"), 2 * dim, dim);
      break;
    case FusionMode::LinearConcat:
      project = nn::Linear(pb.sub("project"), 2 * dim, dim);
      break;
    case FusionMode::MlpConcat:
      mlp = nn::Mlp(pb.sub("mlp"), 2 * dim, 2 * dim, dim);
      break;
    case FusionMode::TemporalOnly:
      project = nn::Linear(pb.sub("project"), dim, dim);
      break;
  }
  decoder = ForecastDecoder(pb.sub("decoder"), dim, horizon, heads);
}

Tensor FusionHead::fuse(const Tensor& x_s, const Tensor& x_i) const {
  if (mode == FusionMode::TemporalOnly) return project(x_i);
  auto [s, i] = align_lengths(x_s, x_i);
  switch (mode) {
    case FusionMode::CrossScan: {
      auto [ys, yi] = cross_modal_block(ssm_s, ssm_i, s, i);
      return project(concat({ys, yi}, 1));
    }
    case FusionMode::LinearConcat:
      return project(concat({s, i}, 1));
    case FusionMode::MlpConcat:
      return mlp(concat({s, i}, 1));
    default:
      throw ContractError("unreachable fusion mode");
  }
}

Tensor FusionHead::operator()(const Tensor& x_s, const Tensor& x_i) const { return decoder(fuse(x_s, x_i)); }

}  // namespace m3s::fusion
