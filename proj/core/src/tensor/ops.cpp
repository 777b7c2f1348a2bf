// SPDX-License-Identifier: Apache-2.0
#include "m3s/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "m3s/error.hpp"
#include "m3s/tensor/fft.hpp"

namespace m3s {

namespace {

using Impl = detail::TensorImpl;
using ImplPtr = std::shared_ptr<Impl>;

std::vector<double>& gbuf(Impl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
  return t.grad;
}

Tensor make(Shape shape, std::vector<double> values, const char* op) {
  Tensor t = Tensor::from(std::move(shape), std::move(values));
  detail::check_finite(t, op);
  return t;
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Shape drop_axis(const Shape& s, std::size_t axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out.empty()) out.push_back(1);
  }
  return out;
}

template <class F, class D>
Tensor unary(const Tensor& x, const char* name, F f, D d) {
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  Tensor y = make(x.shape(), std::move(out), name);
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), d]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * d(xi->data[i], yi->data[i]);
    });
  }
  return y;
}

struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> ia, ib;
};

BroadcastPlan broadcast_plan(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  const std::size_t r = std::max(a.size(), b.size());
  Shape ea(r, 1), eb(r, 1);
  std::copy(a.begin(), a.end(), ea.begin() + static_cast<std::ptrdiff_t>(r - a.size()));
  std::copy(b.begin(), b.end(), eb.begin() + static_cast<std::ptrdiff_t>(r - b.size()));
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (ea[i] != eb[i] && ea[i] != 1 && eb[i] != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[i] = std::max(ea[i], eb[i]);
  }
  std::vector<std::size_t> sa(r), sb(r);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t i = r; i-- > 0;) {
    sa[i] = ea[i] == 1 ? 0 : acc_a;
    sb[i] = eb[i] == 1 ? 0 : acc_b;
    acc_a *= ea[i];
    acc_b *= eb[i];
  }
  const std::size_t n = shape_numel(p.out);
  p.ia.resize(n);
  p.ib.resize(n);
  std::vector<std::size_t> coord(r, 0);
  std::size_t off_a = 0, off_b = 0;
  for (std::size_t k = 0; k < n; ++k) {
    p.ia[k] = off_a;
    p.ib[k] = off_b;
    for (std::size_t i = r; i-- > 0;) {
      ++coord[i];
      off_a += sa[i];
      off_b += sb[i];
      if (coord[i] < p.out[i]) break;
      off_a -= sa[i] * coord[i];
      off_b -= sb[i] * coord[i];
      coord[i] = 0;
    }
  }
  return p;
}

// f(a, b) -> value; da(a, b) and db(a, b) -> partial derivatives.
template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  auto plan = std::make_shared<BroadcastPlan>(broadcast_plan(a.shape(), b.shape()));
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t n = shape_numel(plan->out);
  std::vector<double> out(n);
  if (plan->same) {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(ad[k], bd[k]);
  } else {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(ad[plan->ia[k]], bd[plan->ib[k]]);
  }
  Tensor y = make(plan->out, std::move(out), name);
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [ai = a.impl(), bi = b.impl(), yi = y.impl(), plan, da, db]() {
      const auto& gy = yi->grad;
      const std::size_t n = gy.size();
      if (ai->requires_grad) {
        auto& g = gbuf(*ai);
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t ka = plan->same ? k : plan->ia[k];
          const std::size_t kb = plan->same ? k : plan->ib[k];
          g[ka] += gy[k] * da(ai->data[ka], bi->data[kb]);
        }
      }
      if (bi->requires_grad) {
        auto& g = gbuf(*bi);
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t ka = plan->same ? k : plan->ia[k];
          const std::size_t kb = plan->same ? k : plan->ib[k];
          g[kb] += gy[k] * db(ai->data[ka], bi->data[kb]);
        }
      }
    });
  }
  return y;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double s) {
  return unary(
      x, "scale", [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(
      x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor exp(const Tensor& x) {
  return unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log: argument must be positive");
  }
  return unary(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid", [](double v) { return stable_sigmoid(v); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor gelu(const Tensor& x) {
  detail::check_finite(x, "gelu input");
  return unary(
      x, "gelu", [](double v) { return v * 0.5 * std::erfc(-v * kInvSqrt2); },
      [](double v, double) {
        const double cdf = 0.5 * std::erfc(-v * kInvSqrt2);
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, "silu", [](double v) { return v * stable_sigmoid(v); },
      [](double v, double) {
        const double s = stable_sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, "softplus", [](double v) { return stable_softplus(v); }, [](double v, double) { return stable_sigmoid(v); });
}

Tensor sum(const Tensor& x) {
  const auto xd = x.data();
  double s = 0.0;
  for (double v : xd) s += v;
  Tensor y = make({1}, {s}, "sum");
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl()]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      const double gy = yi->grad[0];
      for (double& v : g) v += gy;
    });
  }
  return y;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  const AxisSplit sp = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.n; ++i) {
      const double* src = xd.data() + (o * sp.n + i) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
    }
  }
  Tensor y = make(drop_axis(x.shape(), axis, keepdim), std::move(out), "sum_axis");
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), sp]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.n; ++i) {
          double* dst = g.data() + (o * sp.n + i) * sp.inner;
          const double* src = yi->grad.data() + o * sp.inner;
          for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return y;
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor variance_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  const AxisSplit sp = split_at(x.shape(), axis);
  const auto xd = x.data();
  const double inv_n = 1.0 / static_cast<double>(sp.n);
  auto means = std::make_shared<std::vector<double>>(sp.outer * sp.inner, 0.0);
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t j = 0; j < sp.inner; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < sp.n; ++i) m += xd[(o * sp.n + i) * sp.inner + j];
      m *= inv_n;
      double v = 0.0;
      for (std::size_t i = 0; i < sp.n; ++i) {
        const double d = xd[(o * sp.n + i) * sp.inner + j] - m;
        v += d * d;
      }
      (*means)[o * sp.inner + j] = m;
      out[o * sp.inner + j] = v * inv_n;
    }
  }
  Tensor y = make(drop_axis(x.shape(), axis, keepdim), std::move(out), "variance_axis");
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), sp, means, inv_n]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < sp.inner; ++j) {
          const double gy = yi->grad[o * sp.inner + j];
          const double m = (*means)[o * sp.inner + j];
          for (std::size_t i = 0; i < sp.n; ++i) {
            const std::size_t k = (o * sp.n + i) * sp.inner + j;
            g[k] += gy * 2.0 * (xi->data[k] - m) * inv_n;
          }
        }
      }
    });
  }
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  Tensor y = Tensor::from(std::move(shape), std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl()]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += yi->grad[k];
    });
  }
  return y;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (perm.size() != r) throw ShapeError("permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (std::size_t p : perm) {
    if (p >= r || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[perm[i]];
  std::vector<std::size_t> in_strides(r);
  std::size_t acc = 1;
  for (std::size_t i = r; i-- > 0;) {
    in_strides[i] = acc;
    acc *= s[i];
  }
  // src_index[k] = flat input index of output element k
  const std::size_t n = x.numel();
  auto src_index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> coord(r, 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < n; ++k) {
    (*src_index)[k] = off;
    for (std::size_t i = r; i-- > 0;) {
      ++coord[i];
      off += in_strides[perm[i]];
      if (coord[i] < out_shape[i]) break;
      off -= in_strides[perm[i]] * coord[i];
      coord[i] = 0;
    }
  }
  const auto xd = x.data();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = xd[(*src_index)[k]];
  Tensor y = Tensor::from(std::move(out_shape), std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), src_index]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      for (std::size_t k = 0; k < src_index->size(); ++k) g[(*src_index)[k]] += yi->grad[k];
    });
  }
  return y;
}

Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1) {
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), 0);
  if (axis0 >= perm.size() || axis1 >= perm.size()) throw ShapeError("transpose: axis out of range");
  std::swap(perm[axis0], perm[axis1]);
  return permute(x, perm);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  Shape out_shape = s0;
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) {
        throw ShapeError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(s0));
      }
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit sp = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  auto offsets = std::make_shared<std::vector<std::size_t>>();
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    offsets->push_back(off);
    const std::size_t len = p.dim(axis) * sp.inner;
    const auto pd = p.data();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pd.data() + o * len, len, out.data() + o * sp.n * sp.inner + off);
    }
    off += len;
  }
  Tensor y = Tensor::from(std::move(out_shape), std::move(out));
  if (Tape* tape = detail::recording_tape(parts)) {
    y.set_requires_grad(true);
    std::vector<ImplPtr> impls;
    for (const Tensor& p : parts) impls.push_back(p.impl());
    tape->record(parts, y, [impls, yi = y.impl(), offsets, sp, axis]() {
      for (std::size_t q = 0; q < impls.size(); ++q) {
        Impl& pi = *impls[q];
        if (!pi.requires_grad) continue;
        auto& g = gbuf(pi);
        const std::size_t len = pi.shape[axis] * sp.inner;
        for (std::size_t o = 0; o < sp.outer; ++o) {
          const double* src = yi->grad.data() + o * sp.n * sp.inner + (*offsets)[q];
          double* dst = g.data() + o * len;
          for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return y;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisSplit sp = split_at(x.shape(), axis);
  if (length == 0 || start + length > sp.n) {
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") out of range for " +
                     shape_str(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  const auto xd = x.data();
  std::vector<double> out(sp.outer * length * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xd.data() + (o * sp.n + start) * sp.inner, length * sp.inner, out.data() + o * length * sp.inner);
  }
  Tensor y = Tensor::from(std::move(out_shape), std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), sp, start, length]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = yi->grad.data() + o * length * sp.inner;
        double* dst = g.data() + (o * sp.n + start) * sp.inner;
        for (std::size_t j = 0; j < length * sp.inner; ++j) dst[j] += src[j];
      }
    });
  }
  return y;
}

Tensor gather(const Tensor& x, std::size_t axis, const std::vector<std::int64_t>& index) {
  const AxisSplit sp = split_at(x.shape(), axis);
  if (index.empty()) throw ShapeError("gather: empty index");
  for (std::int64_t i : index) {
    if (i < -1 || i >= static_cast<std::int64_t>(sp.n)) throw ShapeError("gather: index out of range");
  }
  Shape out_shape = x.shape();
  out_shape[axis] = index.size();
  const std::size_t m = index.size();
  const auto xd = x.data();
  std::vector<double> out(sp.outer * m * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < m; ++i) {
      if (index[i] < 0) continue;
      std::copy_n(xd.data() + (o * sp.n + static_cast<std::size_t>(index[i])) * sp.inner, sp.inner,
                  out.data() + (o * m + i) * sp.inner);
    }
  }
  Tensor y = Tensor::from(std::move(out_shape), std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), sp, index]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      const std::size_t m = index.size();
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < m; ++i) {
          if (index[i] < 0) continue;
          const double* src = yi->grad.data() + (o * m + i) * sp.inner;
          double* dst = g.data() + (o * sp.n + static_cast<std::size_t>(index[i])) * sp.inner;
          for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return y;
}

Tensor scatter_add(const Tensor& x, std::size_t axis, const std::vector<std::int64_t>& index, std::size_t size) {
  const AxisSplit sp = split_at(x.shape(), axis);
  if (index.size() != sp.n) throw ShapeError("scatter_add: index length must equal the axis length");
  if (size == 0) throw ShapeError("scatter_add: target size must be positive");
  for (std::int64_t i : index) {
    if (i < -1 || i >= static_cast<std::int64_t>(size)) throw ShapeError("scatter_add: index out of range");
  }
  Shape out_shape = x.shape();
  out_shape[axis] = size;
  const auto xd = x.data();
  std::vector<double> out(sp.outer * size * sp.inner, 0.0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.n; ++i) {
      if (index[i] < 0) continue;
      const double* src = xd.data() + (o * sp.n + i) * sp.inner;
      double* dst = out.data() + (o * size + static_cast<std::size_t>(index[i])) * sp.inner;
      for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
    }
  }
  Tensor y = Tensor::from(std::move(out_shape), std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), sp, index, size]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.n; ++i) {
          if (index[i] < 0) continue;
          const double* src = yi->grad.data() + (o * size + static_cast<std::size_t>(index[i])) * sp.inner;
          double* dst = g.data() + (o * sp.n + i) * sp.inner;
          for (std::size_t j = 0; j < sp.inner; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return y;
}

namespace {

// c[M,N] += a[M,K] * b[K,N]
void gemm_nn(const double* a, const double* b, double* c, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    double* ci = c + i * N;
    const double* ai = a + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double av = ai[k];
      if (av == 0.0) continue;
      const double* bk = b + k * N;
      for (std::size_t j = 0; j < N; ++j) ci[j] += av * bk[j];
    }
  }
}

// c[M,K] += g[M,N] * b[K,N]^T
void gemm_nt(const double* g, const double* b, double* c, std::size_t M, std::size_t N, std::size_t K) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* gi = g + i * N;
    double* ci = c + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double* bk = b + k * N;
      double s = 0.0;
      for (std::size_t j = 0; j < N; ++j) s += gi[j] * bk[j];
      ci[k] += s;
    }
  }
}

// c[K,N] += a[M,K]^T * g[M,N]
void gemm_tn(const double* a, const double* g, double* c, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    const double* ai = a + i * K;
    const double* gi = g + i * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double av = ai[k];
      if (av == 0.0) continue;
      double* ck = c + k * N;
      for (std::size_t j = 0; j < N; ++j) ck[j] += av * gi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  std::size_t batch = 1, M = 0, K = 0, N = 0;
  bool shared_rhs = false;
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    M = sa[0];
    K = sa[1];
    N = sb[1];
    if (sb[0] != K) throw ShapeError("matmul " + shape_str(sa) + " x " + shape_str(sb));
    out_shape = {M, N};
  } else if (sa.size() == 3 && sb.size() == 3) {
    batch = sa[0];
    M = sa[1];
    K = sa[2];
    N = sb[2];
    if (sb[0] != batch || sb[1] != K) throw ShapeError("matmul " + shape_str(sa) + " x " + shape_str(sb));
    out_shape = {batch, M, N};
  } else if (sa.size() == 3 && sb.size() == 2) {
    batch = sa[0];
    M = sa[1];
    K = sa[2];
    N = sb[1];
    shared_rhs = true;
    if (sb[0] != K) throw ShapeError("matmul " + shape_str(sa) + " x " + shape_str(sb));
    out_shape = {batch, M, N};
  } else {
    throw ShapeError("matmul: unsupported ranks " + shape_str(sa) + " x " + shape_str(sb));
  }
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> out(batch * M * N, 0.0);
  for (std::size_t p = 0; p < batch; ++p) {
    gemm_nn(ad.data() + p * M * K, bd.data() + (shared_rhs ? 0 : p * K * N), out.data() + p * M * N, M, K, N);
  }
  Tensor y = make(std::move(out_shape), std::move(out), "matmul");
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    y.set_requires_grad(true);
    tape->record({a, b}, y, [ai = a.impl(), bi = b.impl(), yi = y.impl(), batch, M, K, N, shared_rhs]() {
      const double* gy = yi->grad.data();
      if (ai->requires_grad) {
        auto& g = gbuf(*ai);
        for (std::size_t p = 0; p < batch; ++p) {
          gemm_nt(gy + p * M * N, bi->data.data() + (shared_rhs ? 0 : p * K * N), g.data() + p * M * K, M, N, K);
        }
      }
      if (bi->requires_grad) {
        auto& g = gbuf(*bi);
        for (std::size_t p = 0; p < batch; ++p) {
          gemm_tn(ai->data.data() + p * M * K, gy + p * M * N, g.data() + (shared_rhs ? 0 : p * K * N), M, K, N);
        }
      }
    });
  }
  return y;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit sp = split_at(x.shape(), axis);
  const auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t j = 0; j < sp.inner; ++j) {
      const std::size_t base = o * sp.n * sp.inner + j;
      double mx = xd[base];
      for (std::size_t i = 1; i < sp.n; ++i) mx = std::max(mx, xd[base + i * sp.inner]);
      double s = 0.0;
      for (std::size_t i = 0; i < sp.n; ++i) {
        const double e = std::exp(xd[base + i * sp.inner] - mx);
        out[base + i * sp.inner] = e;
        s += e;
      }
      const double inv = 1.0 / s;
      for (std::size_t i = 0; i < sp.n; ++i) out[base + i * sp.inner] *= inv;
    }
  }
  Tensor y = make(x.shape(), std::move(out), "softmax");
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), sp]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      const auto& gy = yi->grad;
      const auto& yd = yi->data;
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < sp.inner; ++j) {
          const std::size_t base = o * sp.n * sp.inner + j;
          double dot = 0.0;
          for (std::size_t i = 0; i < sp.n; ++i) dot += gy[base + i * sp.inner] * yd[base + i * sp.inner];
          for (std::size_t i = 0; i < sp.n; ++i) {
            const std::size_t k = base + i * sp.inner;
            g[k] += yd[k] * (gy[k] - dot);
          }
        }
      }
    });
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Shape& s = x.shape();
  const std::size_t d = s.back();
  if (gamma.numel() != d || beta.numel() != d) throw ShapeError("layer_norm: gamma/beta must match last axis");
  const std::size_t rows = x.numel() / d;
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * d;
    double m = 0.0;
    for (std::size_t j = 0; j < d; ++j) m += xr[j];
    m /= static_cast<double>(d);
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (xr[j] - m) * (xr[j] - m);
    v /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(v + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - m) * is;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gd[j] + bd[j];
    }
  }
  Tensor y = make(s, std::move(out), "layer_norm");
  if (Tape* tape = detail::recording_tape({&x, &gamma, &beta})) {
    y.set_requires_grad(true);
    tape->record({x, gamma, beta}, y,
                 [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), yi = y.impl(), xhat, inv_std, rows, d]() {
                   const auto& gy = yi->grad;
                   if (gi->requires_grad) {
                     auto& g = gbuf(*gi);
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < d; ++j) g[j] += gy[r * d + j] * (*xhat)[r * d + j];
                   }
                   if (bi->requires_grad) {
                     auto& g = gbuf(*bi);
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < d; ++j) g[j] += gy[r * d + j];
                   }
                   if (xi->requires_grad) {
                     auto& g = gbuf(*xi);
                     const double inv_d = 1.0 / static_cast<double>(d);
                     for (std::size_t r = 0; r < rows; ++r) {
                       double s1 = 0.0, s2 = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dh = gy[r * d + j] * gi->data[j];
                         s1 += dh;
                         s2 += dh * (*xhat)[r * d + j];
                       }
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dh = gy[r * d + j] * gi->data[j];
                         g[r * d + j] += (*inv_std)[r] * (dh - inv_d * s1 - (*xhat)[r * d + j] * inv_d * s2);
                       }
                     }
                   }
                 });
  }
  return y;
}

namespace {

struct ConvGeom {
  std::size_t N, Cin, H, W, Cout, Cg, Coutg, KH, KW, Ho, Wo, stride, pad, dil;
};

// Range of output positions o with 0 <= o*stride - pad + k*dil < in.
std::pair<std::size_t, std::size_t> valid_range(std::size_t in, std::size_t out, std::size_t k, const ConvGeom& g) {
  const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(k * g.dil) - static_cast<std::ptrdiff_t>(g.pad);
  const auto s = static_cast<std::ptrdiff_t>(g.stride);
  std::ptrdiff_t lo = 0;
  if (off < 0) lo = (-off + s - 1) / s;
  std::ptrdiff_t hi = (static_cast<std::ptrdiff_t>(in) - 1 - off);
  if (hi < 0) return {0, 0};
  hi = hi / s + 1;
  hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out));
  if (lo >= hi) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Conv2dOptions& opt) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4) throw ShapeError("conv2d expects NCHW input and OIHW weights");
  if (opt.stride == 0 || opt.dilation == 0 || opt.groups == 0) throw ShapeError("conv2d: zero stride/dilation/groups");
  ConvGeom g{};
  g.N = sx[0];
  g.Cin = sx[1];
  g.H = sx[2];
  g.W = sx[3];
  g.Cout = sw[0];
  g.Cg = sw[1];
  g.KH = sw[2];
  g.KW = sw[3];
  g.stride = opt.stride;
  g.pad = opt.padding;
  g.dil = opt.dilation;
  if (g.Cin % opt.groups != 0 || g.Cout % opt.groups != 0 || g.Cg * opt.groups != g.Cin) {
    throw ShapeError("conv2d: channels " + std::to_string(g.Cin) + "->" + std::to_string(g.Cout) +
                     " incompatible with groups=" + std::to_string(opt.groups) + " and weight " + shape_str(sw));
  }
  g.Coutg = g.Cout / opt.groups;
  const std::size_t span_h = g.dil * (g.KH - 1) + 1;
  const std::size_t span_w = g.dil * (g.KW - 1) + 1;
  if (g.H + 2 * g.pad < span_h || g.W + 2 * g.pad < span_w) {
    throw ShapeError("conv2d: kernel larger than padded input " + shape_str(sx));
  }
  g.Ho = (g.H + 2 * g.pad - span_h) / g.stride + 1;
  g.Wo = (g.W + 2 * g.pad - span_w) / g.stride + 1;

  const auto xd = x.data();
  const auto wd = w.data();
  std::vector<double> out(g.N * g.Cout * g.Ho * g.Wo, 0.0);
  for (std::size_t n = 0; n < g.N; ++n) {
    for (std::size_t oc = 0; oc < g.Cout; ++oc) {
      const std::size_t grp = oc / g.Coutg;
      double* yo = out.data() + (n * g.Cout + oc) * g.Ho * g.Wo;
      for (std::size_t icg = 0; icg < g.Cg; ++icg) {
        const std::size_t ic = grp * g.Cg + icg;
        const double* xi = xd.data() + (n * g.Cin + ic) * g.H * g.W;
        for (std::size_t ky = 0; ky < g.KH; ++ky) {
          const auto [oh0, oh1] = valid_range(g.H, g.Ho, ky, g);
          for (std::size_t kx = 0; kx < g.KW; ++kx) {
            const double wv = wd[((oc * g.Cg + icg) * g.KH + ky) * g.KW + kx];
            if (wv == 0.0) continue;
            const auto [ow0, ow1] = valid_range(g.W, g.Wo, kx, g);
            for (std::size_t oh = oh0; oh < oh1; ++oh) {
              const std::size_t iy = oh * g.stride + ky * g.dil - g.pad;
              const double* xrow = xi + iy * g.W;
              double* yrow = yo + oh * g.Wo;
              for (std::size_t ow = ow0; ow < ow1; ++ow) {
                yrow[ow] += wv * xrow[ow * g.stride + kx * g.dil - g.pad];
              }
            }
          }
        }
      }
    }
  }
  Tensor y = make({g.N, g.Cout, g.Ho, g.Wo}, std::move(out), "conv2d");
  if (Tape* tape = detail::recording_tape({&x, &w})) {
    y.set_requires_grad(true);
    tape->record({x, w}, y, [xi = x.impl(), wi = w.impl(), yi = y.impl(), g]() {
      const auto& gy = yi->grad;
      const bool need_x = xi->requires_grad;
      const bool need_w = wi->requires_grad;
      double* gx = need_x ? gbuf(*xi).data() : nullptr;
      double* gw = need_w ? gbuf(*wi).data() : nullptr;
      for (std::size_t n = 0; n < g.N; ++n) {
        for (std::size_t oc = 0; oc < g.Cout; ++oc) {
          const std::size_t grp = oc / g.Coutg;
          const double* go = gy.data() + (n * g.Cout + oc) * g.Ho * g.Wo;
          for (std::size_t icg = 0; icg < g.Cg; ++icg) {
            const std::size_t ic = grp * g.Cg + icg;
            const double* xin = xi->data.data() + (n * g.Cin + ic) * g.H * g.W;
            double* gxin = need_x ? gx + (n * g.Cin + ic) * g.H * g.W : nullptr;
            for (std::size_t ky = 0; ky < g.KH; ++ky) {
              const auto [oh0, oh1] = valid_range(g.H, g.Ho, ky, g);
              for (std::size_t kx = 0; kx < g.KW; ++kx) {
                const std::size_t widx = ((oc * g.Cg + icg) * g.KH + ky) * g.KW + kx;
                const double wv = wi->data[widx];
                const auto [ow0, ow1] = valid_range(g.W, g.Wo, kx, g);
                double acc = 0.0;
                for (std::size_t oh = oh0; oh < oh1; ++oh) {
                  const std::size_t iy = oh * g.stride + ky * g.dil - g.pad;
                  const double* grow = go + oh * g.Wo;
                  const double* xrow = xin + iy * g.W;
                  for (std::size_t ow = ow0; ow < ow1; ++ow) {
                    const std::size_t ix = ow * g.stride + kx * g.dil - g.pad;
                    acc += grow[ow] * xrow[ix];
                    if (need_x) gxin[iy * g.W + ix] += wv * grow[ow];
                  }
                }
                if (need_w) gw[widx] += acc;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("upsample_bilinear expects NCHW");
  if (out_h == 0 || out_w == 0) throw ShapeError("upsample_bilinear: zero output size");
  const std::size_t planes = s[0] * s[1], H = s[2], W = s[3];
  struct Tap {
    std::size_t i0, i1;
    double l;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
      if (src < 0) src = 0;
      auto i0 = static_cast<std::size_t>(std::floor(src));
      if (i0 > in - 1) i0 = in - 1;
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      t[o] = {i0, i1, src - static_cast<double>(i0)};
    }
    return t;
  };
  auto ty = std::make_shared<std::vector<Tap>>(taps(H, out_h));
  auto tx = std::make_shared<std::vector<Tap>>(taps(W, out_w));
  const auto xd = x.data();
  std::vector<double> out(planes * out_h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* xp = xd.data() + p * H * W;
    double* yp = out.data() + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Tap& a = (*ty)[oy];
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Tap& b = (*tx)[ox];
        const double top = (1 - b.l) * xp[a.i0 * W + b.i0] + b.l * xp[a.i0 * W + b.i1];
        const double bot = (1 - b.l) * xp[a.i1 * W + b.i0] + b.l * xp[a.i1 * W + b.i1];
        yp[oy * out_w + ox] = (1 - a.l) * top + a.l * bot;
      }
    }
  }
  Tensor y = make({s[0], s[1], out_h, out_w}, std::move(out), "upsample_bilinear");
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), ty, tx, planes, H, W, out_h, out_w]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      for (std::size_t p = 0; p < planes; ++p) {
        double* gp = g.data() + p * H * W;
        const double* gyp = yi->grad.data() + p * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const Tap& a = (*ty)[oy];
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const Tap& b = (*tx)[ox];
            const double gv = gyp[oy * out_w + ox];
            gp[a.i0 * W + b.i0] += gv * (1 - a.l) * (1 - b.l);
            gp[a.i0 * W + b.i1] += gv * (1 - a.l) * b.l;
            gp[a.i1 * W + b.i0] += gv * a.l * (1 - b.l);
            gp[a.i1 * W + b.i1] += gv * a.l * b.l;
          }
        }
      }
    });
  }
  return y;
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) throw ShapeError("global_avg_pool expects NCHW");
  return mean_axis(reshape(x, {s[0], s[1], s[2] * s[3]}), 2);
}

Tensor rfft_amplitudes(const Tensor& x, std::size_t axis) {
  const AxisSplit sp = split_at(x.shape(), axis);
  const std::size_t L = sp.n;
  if (L < 2) throw ShapeError("rfft_amplitudes: axis length must be at least 2");
  const std::size_t bins = L / 2 + 1;
  Shape out_shape = x.shape();
  out_shape[axis] = bins;
  const auto xd = x.data();
  // Complex spectrum kept for the backward rule.
  auto spectra = std::make_shared<std::vector<fft::Complex>>(sp.outer * bins * sp.inner);
  std::vector<double> out(sp.outer * bins * sp.inner);
  std::vector<double> line(L);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t j = 0; j < sp.inner; ++j) {
      for (std::size_t t = 0; t < L; ++t) line[t] = xd[(o * L + t) * sp.inner + j];
      const auto X = fft::dft(line);
      for (std::size_t f = 0; f < bins; ++f) {
        const std::size_t k = (o * bins + f) * sp.inner + j;
        (*spectra)[k] = X[f];
        out[k] = std::abs(X[f]);
      }
    }
  }
  Tensor y = make(std::move(out_shape), std::move(out), "rfft_amplitudes");
  if (Tape* tape = detail::recording_tape({&x})) {
    y.set_requires_grad(true);
    tape->record({x}, y, [xi = x.impl(), yi = y.impl(), spectra, sp, L, bins]() {
      if (!xi->requires_grad) return;
      auto& g = gbuf(*xi);
      // d|X_f|/dx_t = (Re X_f cos(theta) - Im X_f sin(theta)) / |X_f|, theta = 2 pi f t / L
      std::vector<double> cs(L), sn(L);
      for (std::size_t r = 0; r < L; ++r) {
        const double th = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(L);
        cs[r] = std::cos(th);
        sn[r] = std::sin(th);
      }
      for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t j = 0; j < sp.inner; ++j) {
          for (std::size_t f = 0; f < bins; ++f) {
            const std::size_t k = (o * bins + f) * sp.inner + j;
            const double amp = yi->data[k];
            if (amp <= 0.0) continue;
            const double gf = yi->grad[k] / amp;
            if (gf == 0.0) continue;
            const fft::Complex X = (*spectra)[k];
            for (std::size_t t = 0; t < L; ++t) {
              const std::size_t r = (f * t) % L;
              g[(o * L + t) * sp.inner + j] += gf * (X.real() * cs[r] - X.imag() * sn[r]);
            }
          }
        }
      }
    });
  }
  return y;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  return mean(square(sub(pred, target)));
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("bce_with_logits: " + shape_str(logits.shape()) + " vs " + shape_str(targets.shape()));
  }
  const auto z = logits.data();
  const auto t = targets.data();
  for (double v : t) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("bce_with_logits: targets must lie in [0, 1]");
  }
  const double inv_n = 1.0 / static_cast<double>(z.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    acc += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  Tensor y = make({1}, {acc * inv_n}, "bce_with_logits");
  if (Tape* tape = detail::recording_tape({&logits, &targets})) {
    y.set_requires_grad(true);
    tape->record({logits, targets}, y, [zi = logits.impl(), ti = targets.impl(), yi = y.impl(), inv_n]() {
      const double gy = yi->grad[0] * inv_n;
      if (zi->requires_grad) {
        auto& g = gbuf(*zi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy * (stable_sigmoid(zi->data[i]) - ti->data[i]);
      }
      if (ti->requires_grad) {
        auto& g = gbuf(*ti);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy * zi->data[i];
      }
    });
  }
  return y;
}

}  // namespace m3s
