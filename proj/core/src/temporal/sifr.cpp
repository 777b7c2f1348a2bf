// SPDX-License-Identifier: Apache-2.0
#include "m3s/temporal/sifr.hpp"

#include <algorithm>
#include <cmath>

#include "m3s/error.hpp"

namespace m3s::temporal {

std::vector<std::size_t> pyramid_lengths(std::size_t length, std::size_t scales) {
  std::vector<std::size_t> out{length};
  for (std::size_t m = 0; m < scales; ++m) out.push_back((out.back() + 1) / 2);
  return out;
}

Tensor pooling_matrix(std::size_t n) {
  const std::size_t out = (n + 1) / 2;
  Tensor p = Tensor::zeros({out, n});
  auto d = p.mutable_data();
  for (std::size_t i = 0; i < out; ++i) {
    const std::size_t a = 2 * i;
    if (a + 1 < n) {
      d[i * n + a] = 0.5;
      d[i * n + a + 1] = 0.5;
    } else {
      d[i * n + a] = 1.0;
    }
  }
  return p;
}

std::vector<Tensor> build_pyramid(const Tensor& x0, std::size_t scales) {
  if (x0.rank() != 2) throw ShapeError("build_pyramid expects [L, V]");
  if (scales >= 63 || x0.dim(0) < (std::size_t{1} << scales)) {
    throw ConfigError("lookback " + std::to_string(x0.dim(0)) + " is shorter than 2^" + std::to_string(scales));
  }
  std::vector<Tensor> out{x0};
  for (std::size_t m = 0; m < scales; ++m) out.push_back(matmul(pooling_matrix(out.back().dim(0)), out.back()));
  return out;
}

ChannelSelfAttention::ChannelSelfAttention(nn::ParamBuilder pb, std::size_t length)
    : q(pb.sub("q"), length, length), k(pb.sub("k"), length, length), v(pb.sub("v"), length, length) {}

Tensor ChannelSelfAttention::operator()(const Tensor& x) const {
  const Tensor tokens = transpose(x, 0, 1);  // [V, L]
  const Tensor y = nn::grouped_attention(q(tokens), k(tokens), v(tokens), nn::block_groups(1, tokens.dim(0)));
  return add(x, transpose(y, 0, 1));
}

PyramidEmbedding::PyramidEmbedding(nn::ParamBuilder pb, std::size_t variables, std::size_t d_model)
    : embed(pb.sub("embed"), variables, d_model) {}

std::vector<Tensor> PyramidEmbedding::operator()(const std::vector<Tensor>& scales) const {
  std::vector<Tensor> out;
  out.reserve(scales.size());
  for (const auto& x : scales) out.push_back(add(embed(x), nn::sinusoidal_positions(x.dim(0), embed.out)));
  return out;
}

PeriodSet extract_periods(const Tensor& x, std::size_t k) {
  if (x.rank() != 2) throw ShapeError("extract_periods expects [L, C]");
  const std::size_t L = x.dim(0);
  if (L < 4) throw ConfigError("period extraction needs at least 4 samples at the coarsest scale");
  if (k == 0) throw ConfigError("top-k must be at least 1");
  const Tensor spectrum = mean_axis(rfft_amplitudes(x, 0), 1);  // [L/2 + 1]
  const auto amp = spectrum.data();
  // Greedy selection; amplitudes within kTieTolerance of the maximum count as
  // tied and the lowest such frequency wins.
  constexpr double kTieTolerance = 1e-9;
  std::vector<bool> taken(amp.size(), false);
  std::vector<std::size_t> bins;
  const std::size_t count = std::min(k, amp.size() - 1);
  while (bins.size() < count) {
    double best = -1.0;
    for (std::size_t f = 1; f < amp.size(); ++f) {
      if (!taken[f]) best = std::max(best, amp[f]);
    }
    std::size_t pick = 0;
    for (std::size_t f = 1; f < amp.size(); ++f) {
      if (!taken[f] && amp[f] >= best - kTieTolerance * std::max(1.0, best)) {
        pick = f;
        break;
      }
    }
    taken[pick] = true;
    bins.push_back(pick);
  }
  PeriodSet ps;
  std::vector<std::int64_t> idx;
  for (std::size_t f : bins) {
    const auto p = static_cast<std::size_t>(std::lround(static_cast<double>(L) / static_cast<double>(f)));
    ps.periods.push_back({f, std::clamp<std::size_t>(p, 2, L), amp[f]});
    idx.push_back(static_cast<std::int64_t>(f));
  }
  ps.amplitudes = gather(spectrum, 0, idx);
  return ps;
}

std::size_t period_at_scale(std::size_t period, std::size_t m, std::size_t scales, std::size_t length) {
  const std::size_t p = period << (scales - m);
  return std::clamp<std::size_t>(p, 2, std::max<std::size_t>(2, length));
}

Tensor to_2d(const Tensor& x, std::size_t period) {
  if (period < 2) throw ConfigError("imaging period must be at least 2");
  const std::size_t L = x.dim(0), C = x.dim(1);
  const std::size_t f = (L + period - 1) / period;
  std::vector<std::int64_t> idx(period * f);
  for (std::size_t r = 0; r < period; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      const std::size_t t = c * period + r;
      idx[r * f + c] = t < L ? static_cast<std::int64_t>(t) : -1;
    }
  }
  return reshape(gather(x, 0, idx), {period, f, C});
}

Tensor from_2d(const Tensor& z, std::size_t length) {
  const std::size_t p = z.dim(0), f = z.dim(1), C = z.dim(2);
  if (length > p * f) throw ShapeError("from_2d: requested length exceeds the image");
  std::vector<std::int64_t> idx(length);
  for (std::size_t t = 0; t < length; ++t) idx[t] = static_cast<std::int64_t>((t % p) * f + t / p);
  return gather(reshape(z, {p * f, C}), 0, idx);
}

MsaBlock::MsaBlock(nn::ParamBuilder pb, std::size_t channels, std::size_t heads)
    : ln_attn(pb.sub("ln_attn"), channels),
      ln_ffn(pb.sub("ln_ffn"), channels),
      attn(pb.sub("attn"), channels, heads),
      ffn(pb.sub("ffn"), channels, 2 * channels, channels) {}

Tensor MsaBlock::operator()(const Tensor& z, const nn::AttentionGroups& groups) const {
  if (z.rank() != 3) throw ShapeError("attention block expects a [P, F, C] image");
  const std::size_t P = z.dim(0), F = z.dim(1), C = z.dim(2);
  Tensor t = reshape(z, {P * F, C});
  const Tensor n = ln_attn(t);
  t = add(t, attn(n, n, groups));
  t = add(t, ffn(ln_ffn(t)));
  return reshape(t, {P, F, C});
}

Tensor dense_msa(const MsaBlock& block, const Tensor& z, std::size_t window) {
  return block(z, nn::window_groups(z.dim(0), z.dim(1), window));
}

Tensor sparse_msa(const MsaBlock& block, const Tensor& z, std::size_t interval) {
  return block(z, nn::strided_groups(z.dim(0) * z.dim(1), interval));
}

RetractableAttention::RetractableAttention(nn::ParamBuilder pb, std::size_t channels, std::size_t heads,
                                           std::size_t depth, std::size_t window_, std::size_t interval_)
    : window(window_), interval(interval_) {
  if (depth == 0) throw ConfigError("retractable attention depth must be at least 1");
  if (window == 0 || interval == 0) throw ConfigError("window and interval must be at least 1");
  for (std::size_t i = 0; i < depth; ++i) {
    dense.emplace_back(pb.sub("dense" + std::to_string(i)), channels, heads);
    sparse.emplace_back(pb.sub("sparse" + std::to_string(i)), channels, heads);
  }
}

Tensor RetractableAttention::operator()(const Tensor& z) const {
  Tensor y = z;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    y = dense_msa(dense[i], y, window);
    y = sparse_msa(sparse[i], y, interval);
  }
  return y;
}

Tensor fuse_amplitude_weighted(const std::vector<Tensor>& views, const Tensor& amplitudes) {
  if (views.empty() || amplitudes.numel() != views.size()) {
    throw ShapeError("fuse_amplitude_weighted: one amplitude per view required");
  }
  const Tensor w = softmax(reshape(amplitudes, {views.size()}), 0);
  Tensor acc;
  for (std::size_t k = 0; k < views.size(); ++k) {
    const Tensor term = mul(views[k], slice(w, 0, k, 1));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

EnsembleHeads::EnsembleHeads(nn::ParamBuilder pb, const std::vector<std::size_t>& scale_lengths,
                             std::size_t out_length, std::size_t first_scale_)
    : weights(scale_lengths.size()), biases(scale_lengths.size()), first_scale(first_scale_) {
  if (first_scale >= scale_lengths.size()) throw ConfigError("ensemble keeps no scale");
  for (std::size_t m = first_scale; m < scale_lengths.size(); ++m) {
    auto sub = pb.sub("head" + std::to_string(m));
    weights[m] = sub.weight("weight", {out_length, scale_lengths[m]}, scale_lengths[m]);
    biases[m] = sub.zeros("bias", {out_length, 1});
  }
}

Tensor EnsembleHeads::head(std::size_t m, const Tensor& h) const { return add(matmul(weights[m], h), biases[m]); }

Tensor EnsembleHeads::operator()(const std::vector<Tensor>& hs) const {
  if (hs.size() != weights.size()) throw ShapeError("ensemble: one fused feature per scale required");
  Tensor acc;
  for (std::size_t m = first_scale; m < hs.size(); ++m) {
    const Tensor y = head(m, hs[m]);
    acc = acc.defined() ? add(acc, y) : y;
  }
  return scale(acc, 1.0 / static_cast<double>(hs.size() - first_scale));
}

SifrNet::SifrNet(nn::ParamBuilder pb, const SifrConfig& c) : cfg(c) {
  const auto lengths = pyramid_lengths(cfg.lookback, cfg.scales);
  if (cfg.lookback < (std::size_t{1} << cfg.scales)) throw ConfigError("lookback shorter than 2^scales");
  csa = ChannelSelfAttention(pb.sub("csa"), lengths.back());
  embedding = PyramidEmbedding(pb.sub("embedding"), cfg.variables, cfg.d_model);
  ra = RetractableAttention(pb.sub("ra"), cfg.d_model, cfg.heads, cfg.depth, cfg.window, cfg.interval);
  heads = EnsembleHeads(pb.sub("heads"), lengths, cfg.lookback + cfg.horizon,
                        cfg.coarsest_head_only ? cfg.scales : 0);
}

TemporalOutput SifrNet::operator()(const Tensor& x0) const {
  if (x0.rank() != 2 || x0.dim(0) != cfg.lookback || x0.dim(1) != cfg.variables) {
    throw ShapeError("temporal branch expects [" + std::to_string(cfg.lookback) + ", " +
                     std::to_string(cfg.variables) + "], got " + shape_str(x0.shape()));
  }
  auto pyramid = build_pyramid(x0, cfg.scales);
  pyramid.back() = csa(pyramid.back());
  const auto embedded = embedding(pyramid);
  TemporalOutput out;
  out.periods = extract_periods(embedded.back(), cfg.top_k);
  std::vector<Tensor> fused(embedded.size());
  for (std::size_t m = 0; m < embedded.size(); ++m) {
    if (m < heads.first_scale) continue;  // no head consumes this scale
    const std::size_t Lm = embedded[m].dim(0);
    std::vector<Tensor> views;
    for (const auto& p : out.periods.periods) {
      const std::size_t pm = period_at_scale(p.period, m, cfg.scales, Lm);
      views.push_back(from_2d(ra(to_2d(embedded[m], pm)), Lm));
    }
    fused[m] = fuse_amplitude_weighted(views, out.periods.amplitudes);
  }
  out.x_i = heads(fused);
  return out;
}

}  // namespace m3s::temporal
