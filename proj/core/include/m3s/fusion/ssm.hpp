// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <utility>

#include "m3s/nn/layers.hpp"

namespace m3s::fusion {

/// Zero-order-hold coefficients of one diagonal state entry.
struct ZohCoefficients {
  double a_bar;  // exp(delta * a)
  double b_scale;  // (exp(delta * a) - 1) / a, tending to delta as a -> 0
};
ZohCoefficients zoh(double delta, double a);

/// Discretizes a diagonal system for every position and channel.
/// delta: [L, D], a: [N], b: [L, N] -> (A_bar, B_bar), both [L, D, N].
/// Not recorded on the tape; selective_scan fuses this step.
std::pair<Tensor, Tensor> ssm_discretize(const Tensor& delta, const Tensor& a, const Tensor& b);

/// Operands of one selective scan.
struct ScanInputs {
  Tensor x;      // [L, D]
  Tensor delta;  // [L, D], positive
  Tensor a;      // [N], negative
  Tensor b;      // [L, N]
  Tensor c;      // [L, N]
  Tensor d;      // [D]
};

/// h_k[d,n] = A_bar h_{k-1}[d,n] + B_bar[k,d,n] x[k,d];
/// y[k,d] = sum_n c[k,n] h_k[d,n] + d[d] x[k,d]; h_0 = 0. Output [L, D].
Tensor selective_scan(const ScanInputs& in);

/// Paired scans where each modality reads its state through the other
/// modality's C. Lengths must agree.
std::pair<Tensor, Tensor> cross_modal_scan(const ScanInputs& s, const ScanInputs& i);

/// Input-dependent scan parameters generated from a token sequence.
struct SsmProjection {
  Tensor u;      // SiLU(in(x)), [L, D]
  Tensor z;      // gate branch, [L, D]
  Tensor delta;  // softplus(dt(u)), [L, D]
  Tensor b;      // [L, N]
  Tensor c;      // [L, N]
};

/// Pre-norm residual selective state-space block:
/// x + out(scan(norm(x)) * SiLU(gate(norm(x)))).
struct SelectiveSsm {
  SelectiveSsm() = default;
  SelectiveSsm(nn::ParamBuilder pb, std::size_t dim, std::size_t state);

  /// Projections of the normalized input.
  SsmProjection project(const Tensor& x) const;
  /// Diagonal state matrix, -exp(a_log).
  Tensor a() const;
  ScanInputs scan_inputs(const SsmProjection& p, const Tensor& c) const;
  /// Gate and project a raw scan output, then add the block input x.
  Tensor finish(const Tensor& y, const SsmProjection& p, const Tensor& x) const;
  /// Single-modality block: x [L, D] -> [L, D].
  Tensor operator()(const Tensor& x) const;

  nn::LayerNorm norm;
  nn::Linear in, gate, dt, proj_b, proj_c, out;
  Tensor a_log;
  Tensor skip;
  std::size_t dim = 0, state = 0;
};

/// Cross-modal selective scan over aligned features with swapped C.
std::pair<Tensor, Tensor> cross_modal_block(const SelectiveSsm& s_block, const SelectiveSsm& i_block,
                                            const Tensor& x_s, const Tensor& x_i);

}  // namespace m3s::fusion
