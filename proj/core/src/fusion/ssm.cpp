// SPDX-License-Identifier: Apache-2.0
#include "m3s/fusion/ssm.hpp"

#include <cmath>
#include <memory>

#include "m3s/error.hpp"

namespace m3s::fusion {

namespace {

// b_scale and its derivative with respect to a. Near z = delta*a = 0 the
// closed forms cancel catastrophically, so a Taylor series takes over.
struct ZohFull {
  double a_bar, b_scale, db_da;
};

ZohFull zoh_full(double delta, double a) {
  const double z = delta * a;
  const double ab = std::exp(z);
  if (std::abs(z) < 1e-4) {
    const double bs = delta * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0);
    const double db = delta * delta * (0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0);
    return {ab, bs, db};
  }
  const double em1 = std::expm1(z);
  return {ab, em1 / a, (z * ab - em1) / (a * a)};
}

void check_scan_shapes(const ScanInputs& in) {
  if (in.x.rank() != 2 || in.delta.shape() != in.x.shape()) throw ShapeError("selective_scan: x/delta must be [L, D]");
  const std::size_t L = in.x.dim(0), D = in.x.dim(1);
  if (in.a.rank() != 1) throw ShapeError("selective_scan: a must be [N]");
  const std::size_t N = in.a.dim(0);
  const Shape ln{L, N};
  if (in.b.shape() != ln || in.c.shape() != ln) throw ShapeError("selective_scan: b/c must be [L, N]");
  if (in.d.shape() != Shape{D}) throw ShapeError("selective_scan: d must be [D]");
  for (double v : in.a.data()) {
    if (!(v < 0.0)) throw NumericError("selective_scan: state matrix entries must be negative");
  }
  for (double v : in.delta.data()) {
    if (!(v >= 0.0)) throw NumericError("selective_scan: step sizes must be non-negative");
  }
}

}  // namespace

ZohCoefficients zoh(double delta, double a) {
  const auto f = zoh_full(delta, a);
  return {f.a_bar, f.b_scale};
}

std::pair<Tensor, Tensor> ssm_discretize(const Tensor& delta, const Tensor& a, const Tensor& b) {
  const std::size_t L = delta.dim(0), D = delta.dim(1), N = a.dim(0);
  if (b.shape() != Shape{L, N}) throw ShapeError("ssm_discretize: b must be [L, N]");
  std::vector<double> ab(L * D * N), bb(L * D * N);
  for (std::size_t k = 0; k < L; ++k) {
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t n = 0; n < N; ++n) {
        const auto z = zoh(delta.data()[k * D + d], a.data()[n]);
        ab[(k * D + d) * N + n] = z.a_bar;
        bb[(k * D + d) * N + n] = z.b_scale * b.data()[k * N + n];
      }
    }
  }
  return {Tensor::from({L, D, N}, std::move(ab)), Tensor::from({L, D, N}, std::move(bb))};
}

Tensor selective_scan(const ScanInputs& in) {
  check_scan_shapes(in);
  const std::size_t L = in.x.dim(0), D = in.x.dim(1), N = in.a.dim(0);
  const auto x = in.x.data();
  const auto dl = in.delta.data();
  const auto a = in.a.data();
  const auto b = in.b.data();
  const auto c = in.c.data();
  const auto sk = in.d.data();

  // hs[k] holds h_k for k = 1..L; hs[0] is the zero initial state.
  auto hs = std::make_shared<std::vector<double>>((L + 1) * D * N, 0.0);
  std::vector<double> y(L * D);
  for (std::size_t k = 0; k < L; ++k) {
    const double* hp = hs->data() + k * D * N;
    double* hk = hs->data() + (k + 1) * D * N;
    for (std::size_t d = 0; d < D; ++d) {
      const double xv = x[k * D + d];
      const double dv = dl[k * D + d];
      double acc = sk[d] * xv;
      for (std::size_t n = 0; n < N; ++n) {
        const auto z = zoh_full(dv, a[n]);
        const double h = z.a_bar * hp[d * N + n] + z.b_scale * b[k * N + n] * xv;
        hk[d * N + n] = h;
        acc += c[k * N + n] * h;
      }
      y[k * D + d] = acc;
    }
  }
  Tensor out = Tensor::from({L, D}, std::move(y));
  detail::check_finite(out, "selective_scan");

  if (Tape* tape = detail::recording_tape({&in.x, &in.delta, &in.a, &in.b, &in.c, &in.d})) {
    out.set_requires_grad(true);
    tape->record({in.x, in.delta, in.a, in.b, in.c, in.d}, out,
                 [xi = in.x.impl(), di = in.delta.impl(), ai = in.a.impl(), bi = in.b.impl(), ci = in.c.impl(),
                  si = in.d.impl(), oi = out.impl(), hs, L, D, N]() {
                   std::vector<double> gx(L * D, 0.0), gdl(L * D, 0.0), ga(N, 0.0), gb(L * N, 0.0),
                       gc(L * N, 0.0), gs(D, 0.0);
                   std::vector<double> gh(D * N, 0.0);
                   const auto& x = xi->data;
                   const auto& dl = di->data;
                   const auto& a = ai->data;
                   const auto& b = bi->data;
                   const auto& c = ci->data;
                   const auto& sk = si->data;
                   const auto& gy = oi->grad;
                   for (std::size_t kk = L; kk-- > 0;) {
                     const double* hp = hs->data() + kk * D * N;
                     const double* hk = hs->data() + (kk + 1) * D * N;
                     for (std::size_t d = 0; d < D; ++d) {
                       const double g = gy[kk * D + d];
                       const double xv = x[kk * D + d];
                       const double dv = dl[kk * D + d];
                       gs[d] += g * xv;
                       gx[kk * D + d] += g * sk[d];
                       for (std::size_t n = 0; n < N; ++n) {
                         gc[kk * N + n] += g * hk[d * N + n];
                         double& ghn = gh[d * N + n];
                         ghn += g * c[kk * N + n];
                         const auto z = zoh_full(dv, a[n]);
                         const double bx = b[kk * N + n] * xv;
                         const double g_ab = ghn * hp[d * N + n];
                         const double g_bs = ghn * bx;
                         gb[kk * N + n] += ghn * z.b_scale * xv;
                         gx[kk * D + d] += ghn * z.b_scale * b[kk * N + n];
                         // d a_bar/d delta = a*a_bar; d b_scale/d delta = a_bar.
                         gdl[kk * D + d] += g_ab * a[n] * z.a_bar + g_bs * z.a_bar;
                         ga[n] += g_ab * dv * z.a_bar + g_bs * z.db_da;
                         ghn *= z.a_bar;
                       }
                     }
                   }
                   auto acc = [](detail::TensorImpl& t, const std::vector<double>& g) {
                     if (!t.requires_grad) return;
                     if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
                     for (std::size_t i = 0; i < g.size(); ++i) t.grad[i] += g[i];
                   };
                   acc(*xi, gx);
                   acc(*di, gdl);
                   acc(*ai, ga);
                   acc(*bi, gb);
                   acc(*ci, gc);
                   acc(*si, gs);
                 });
  }
  return out;
}

std::pair<Tensor, Tensor> cross_modal_scan(const ScanInputs& s, const ScanInputs& i) {
  if (s.x.rank() != 2 || i.x.rank() != 2 || s.x.dim(0) != i.x.dim(0)) {
    throw ContractError("cross_modal_scan: modalities must have equal lengths");
  }
  ScanInputs s_swapped = s;
  ScanInputs i_swapped = i;
  s_swapped.c = i.c;
  i_swapped.c = s.c;
  return {selective_scan(s_swapped), selective_scan(i_swapped)};
}

SelectiveSsm::SelectiveSsm(nn::ParamBuilder pb, std::size_t dim_, std::size_t state_) : dim(dim_), state(state_) {
  if (dim == 0 || state == 0) throw ConfigError("selective SSM needs positive width and state size");
  norm = nn::LayerNorm(pb.sub("norm"), dim);
  in = nn::Linear(pb.sub("in"), dim, dim);
  gate = nn::Linear(pb.sub("gate"), dim, dim);
  dt = nn::Linear(pb.sub("dt"), dim, dim);
  // softplus(bias) = 0.1 gives moderate initial step sizes.
  {
    auto bias = dt.bias.mutable_data();
    for (auto& v : bias) v = std::log(std::expm1(0.1));
  }
  proj_b = nn::Linear(pb.sub("b"), dim, state);
  proj_c = nn::Linear(pb.sub("c"), dim, state);
  std::vector<double> al(state);
  for (std::size_t n = 0; n < state; ++n) al[n] = std::log(static_cast<double>(n + 1));
  a_log = pb.constant("a_log", {state}, 0.0);
  {
    auto d = a_log.mutable_data();
    for (std::size_t n = 0; n < state; ++n) d[n] = al[n];
  }
  skip = pb.constant("skip", {dim}, 1.0);
  out = nn::Linear(pb.sub("out"), dim, dim);
}

SsmProjection SelectiveSsm::project(const Tensor& x) const {
  SsmProjection p;
  const Tensor xn = norm(x);
  p.u = silu(in(xn));
  p.z = gate(xn);
  p.delta = softplus(dt(p.u));
  p.b = proj_b(p.u);
  p.c = proj_c(p.u);
  return p;
}

Tensor SelectiveSsm::a() const { return neg(exp(a_log)); }

ScanInputs SelectiveSsm::scan_inputs(const SsmProjection& p, const Tensor& c) const {
  return {p.u, p.delta, a(), p.b, c, skip};
}

Tensor SelectiveSsm::finish(const Tensor& y, const SsmProjection& p, const Tensor& x) const {
  return add(x, out(mul(y, silu(p.z))));
}

Tensor SelectiveSsm::operator()(const Tensor& x) const {
  const auto p = project(x);
  return finish(selective_scan(scan_inputs(p, p.c)), p, x);
}

std::pair<Tensor, Tensor> cross_modal_block(const SelectiveSsm& s_block, const SelectiveSsm& i_block,
                                            const Tensor& x_s, const Tensor& x_i) {
  const auto ps = s_block.project(x_s);
  const auto pi = i_block.project(x_i);
  auto [ys, yi] = cross_modal_scan(s_block.scan_inputs(ps, ps.c), i_block.scan_inputs(pi, pi.c));
  return {s_block.finish(ys, ps, x_s), i_block.finish(yi, pi, x_i)};
}

}  // namespace m3s::fusion
