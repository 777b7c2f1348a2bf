// SPDX-License-Identifier: Apache-2.0
#include "m3s/nn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "m3s/error.hpp"

namespace m3s::nn {

AttentionGroups block_groups(std::size_t batch, std::size_t tokens) { return cross_block_groups(batch, tokens, tokens); }

AttentionGroups cross_block_groups(std::size_t batch, std::size_t q_tokens, std::size_t k_tokens) {
  AttentionGroups gs(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < q_tokens; ++i) gs[b].queries.push_back(b * q_tokens + i);
    for (std::size_t j = 0; j < k_tokens; ++j) gs[b].keys.push_back(b * k_tokens + j);
  }
  return gs;
}

AttentionGroups window_groups(std::size_t rows, std::size_t cols, std::size_t window) {
  if (window == 0) throw ConfigError("window size must be at least 1");
  AttentionGroups gs;
  for (std::size_t r0 = 0; r0 < rows; r0 += window) {
    for (std::size_t c0 = 0; c0 < cols; c0 += window) {
      AttentionGroup g;
      for (std::size_t r = r0; r < std::min(rows, r0 + window); ++r) {
        for (std::size_t c = c0; c < std::min(cols, c0 + window); ++c) g.queries.push_back(r * cols + c);
      }
      g.keys = g.queries;
      gs.push_back(std::move(g));
    }
  }
  return gs;
}

AttentionGroups strided_groups(std::size_t tokens, std::size_t interval) {
  if (interval == 0) throw ConfigError("sparse interval must be at least 1");
  AttentionGroups gs;
  for (std::size_t o = 0; o < std::min(interval, tokens); ++o) {
    AttentionGroup g;
    for (std::size_t t = o; t < tokens; t += interval) g.queries.push_back(t);
    g.keys = g.queries;
    gs.push_back(std::move(g));
  }
  return gs;
}

Tensor grouped_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionGroups& groups,
                         const AttentionOptions& opt) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw ShapeError("grouped_attention expects 2-D q, k, v");
  const std::size_t Tq = q.dim(0), Tk = k.dim(0), Dqk = q.dim(1), Dv = v.dim(1);
  if (k.dim(1) != Dqk) throw ShapeError("grouped_attention: q/k width mismatch");
  if (v.dim(0) != Tk) throw ShapeError("grouped_attention: k/v length mismatch");
  const std::size_t H = opt.heads;
  if (H == 0 || Dqk % H != 0 || Dv % H != 0) throw ShapeError("grouped_attention: widths not divisible by heads");
  const std::size_t dh = Dqk / H, dvh = Dv / H;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& g : groups) {
    for (std::size_t i : g.queries) {
      if (i >= Tq) throw ShapeError("grouped_attention: query index out of range");
    }
    for (std::size_t j : g.keys) {
      if (j >= Tk) throw ShapeError("grouped_attention: key index out of range");
    }
    if (g.keys.empty() && !g.queries.empty()) throw ShapeError("grouped_attention: group without keys");
  }

  const auto qd = q.data();
  const auto kd = k.data();
  const auto vd = v.data();
  // probs[g][h] is a row-major [nq, nk] matrix.
  auto probs = std::make_shared<std::vector<std::vector<double>>>(groups.size() * H);
  std::vector<double> out(Tq * Dv, 0.0);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    const std::size_t nq = g.queries.size(), nk = g.keys.size();
    for (std::size_t h = 0; h < H; ++h) {
      auto& P = (*probs)[gi * H + h];
      P.assign(nq * nk, 0.0);
      for (std::size_t a = 0; a < nq; ++a) {
        const double* qr = qd.data() + g.queries[a] * Dqk + h * dh;
        const std::size_t visible = opt.causal ? std::min(nk, a + 1) : nk;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < visible; ++b) {
          const double* kr = kd.data() + g.keys[b] * Dqk + h * dh;
          double s = 0.0;
          for (std::size_t d = 0; d < dh; ++d) s += qr[d] * kr[d];
          s *= sc;
          P[a * nk + b] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (std::size_t b = 0; b < visible; ++b) {
          const double e = std::exp(P[a * nk + b] - mx);
          P[a * nk + b] = e;
          z += e;
        }
        const double inv = 1.0 / z;
        double* orow = out.data() + g.queries[a] * Dv + h * dvh;
        for (std::size_t b = 0; b < visible; ++b) {
          const double p = P[a * nk + b] * inv;
          P[a * nk + b] = p;
          const double* vr = vd.data() + g.keys[b] * Dv + h * dvh;
          for (std::size_t e = 0; e < dvh; ++e) orow[e] += p * vr[e];
        }
      }
    }
  }
  Tensor y = Tensor::from({Tq, Dv}, std::move(out));
  detail::check_finite(y, "grouped_attention");
  if (Tape* tape = detail::recording_tape({&q, &k, &v})) {
    y.set_requires_grad(true);
    tape->record({q, k, v}, y,
                 [qi = q.impl(), ki = k.impl(), vi = v.impl(), yi = y.impl(), groups, probs, H, dh, dvh, Dqk, Dv, sc]() {
                   auto grad_of = [](detail::TensorImpl& t) -> std::vector<double>& {
                     if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
                     return t.grad;
                   };
                   std::vector<double>* gq = qi->requires_grad ? &grad_of(*qi) : nullptr;
                   std::vector<double>* gk = ki->requires_grad ? &grad_of(*ki) : nullptr;
                   std::vector<double>* gv = vi->requires_grad ? &grad_of(*vi) : nullptr;
                   const auto& gy = yi->grad;
                   std::vector<double> dP;
                   for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                     const auto& g = groups[gi];
                     const std::size_t nq = g.queries.size(), nk = g.keys.size();
                     for (std::size_t h = 0; h < H; ++h) {
                       const auto& P = (*probs)[gi * H + h];
                       dP.assign(nk, 0.0);
                       for (std::size_t a = 0; a < nq; ++a) {
                         const double* go = gy.data() + g.queries[a] * Dv + h * dvh;
                         double dot = 0.0;
                         for (std::size_t b = 0; b < nk; ++b) {
                           const double p = P[a * nk + b];
                           const double* vr = vi->data.data() + g.keys[b] * Dv + h * dvh;
                           double s = 0.0;
                           for (std::size_t e = 0; e < dvh; ++e) s += go[e] * vr[e];
                           dP[b] = s;
                           dot += s * p;
                           if (gv && p != 0.0) {
                             double* gvr = gv->data() + g.keys[b] * Dv + h * dvh;
                             for (std::size_t e = 0; e < dvh; ++e) gvr[e] += p * go[e];
                           }
                         }
                         const double* qr = qi->data.data() + g.queries[a] * Dqk + h * dh;
                         double* gqr = gq ? gq->data() + g.queries[a] * Dqk + h * dh : nullptr;
                         for (std::size_t b = 0; b < nk; ++b) {
                           const double p = P[a * nk + b];
                           if (p == 0.0) continue;
                           const double ds = p * (dP[b] - dot) * sc;
                           const double* kr = ki->data.data() + g.keys[b] * Dqk + h * dh;
                           if (gqr) {
                             for (std::size_t d = 0; d < dh; ++d) gqr[d] += ds * kr[d];
                           }
                           if (gk) {
                             double* gkr = gk->data() + g.keys[b] * Dqk + h * dh;
                             for (std::size_t d = 0; d < dh; ++d) gkr[d] += ds * qr[d];
                           }
                         }
                       }
                     }
                   }
                 });
  }
  return y;
}

MultiHeadAttention::MultiHeadAttention(ParamBuilder pb, std::size_t dim, std::size_t heads_, bool out_proj,
                                       std::size_t kv_dim)
    : heads(heads_), output_projection(out_proj) {
  if (kv_dim == 0) kv_dim = dim;
  wq = Linear(pb.sub("q"), dim, dim);
  wk = Linear(pb.sub("k"), kv_dim, dim);
  wv = Linear(pb.sub("v"), kv_dim, dim);
  if (output_projection) wo = Linear(pb.sub("o"), dim, dim);
}

Tensor MultiHeadAttention::operator()(const Tensor& xq, const Tensor& xkv, const AttentionGroups& groups,
                                      bool causal) const {
  AttentionOptions opt;
  opt.heads = heads;
  opt.causal = causal;
  Tensor y = grouped_attention(wq(xq), wk(xkv), wv(xkv), groups, opt);
  return output_projection ? wo(y) : y;
}

}  // namespace m3s::nn
