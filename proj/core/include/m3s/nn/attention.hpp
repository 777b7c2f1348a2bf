// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "m3s/nn/layers.hpp"
#include "m3s/tensor/tensor.hpp"

namespace m3s::nn {

/// One attention neighbourhood: every query row attends to every key row of
/// the same group (subject to the causal mask). Queries absent from all
/// groups produce zero rows.
struct AttentionGroup {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> keys;
};
using AttentionGroups = std::vector<AttentionGroup>;

/// Full attention within each of `batch` consecutive blocks of `tokens` rows.
AttentionGroups block_groups(std::size_t batch, std::size_t tokens);
/// Queries of block b (q_tokens rows each) attend to keys of block b.
AttentionGroups cross_block_groups(std::size_t batch, std::size_t q_tokens, std::size_t k_tokens);
/// Non-overlapping window x window tiles of a rows x cols grid flattened
/// row-major; edge tiles are smaller.
AttentionGroups window_groups(std::size_t rows, std::size_t cols, std::size_t window);
/// Stride classes {o, o+I, o+2I, ...} for every offset o < I of a flattened
/// sequence; together they partition the tokens.
AttentionGroups strided_groups(std::size_t tokens, std::size_t interval);

struct AttentionOptions {
  std::size_t heads = 1;
  /// Query at group position i sees keys at positions <= i.
  bool causal = false;
};

/// softmax(Q K^T / sqrt(d_head)) V evaluated independently per group and head.
/// q: [Tq, Dqk], k: [Tk, Dqk], v: [Tk, Dv] -> [Tq, Dv]. Dqk and Dv must be
/// divisible by the head count.
Tensor grouped_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionGroups& groups,
                         const AttentionOptions& opt = {});

/// Projected multi-head attention over row-token matrices.
struct MultiHeadAttention {
  MultiHeadAttention() = default;
  /// `kv_dim` is the width of the key/value source (0 means `dim`).
  MultiHeadAttention(ParamBuilder pb, std::size_t dim, std::size_t heads, bool output_projection = true,
                     std::size_t kv_dim = 0);
  /// xq: [Tq, dim], xkv: [Tk, kv_dim] -> [Tq, dim].
  Tensor operator()(const Tensor& xq, const Tensor& xkv, const AttentionGroups& groups, bool causal = false) const;

  Linear wq, wk, wv, wo;
  std::size_t heads = 1;
  bool output_projection = true;
};

}  // namespace m3s::nn
