// SPDX-License-Identifier: Apache-2.0
#include "m3s/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "m3s/error.hpp"
#include "m3s/tensor/rng.hpp"

namespace m3s {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
  NoGradScope no_grad;
  const Tensor y = f();
  if (y.numel() != 1) throw ContractError("finite_difference_check: f must return a scalar");
  const double v = y.item();
  if (!std::isfinite(v)) throw NumericError("finite_difference_check: f returned a non-finite value");
  return v;
}

}  // namespace

GradCheckReport finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> params, double tol,
                                        const GradCheckOptions& opt) {
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
    for (double v : p.data()) {
      if (!std::isfinite(v)) throw NumericError("finite_difference_check: non-finite parameter");
    }
  }
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = f();
  }
  if (loss.numel() != 1) throw ContractError("finite_difference_check: f must return a scalar");
  if (!std::isfinite(loss.item())) throw NumericError("finite_difference_check: f returned a non-finite value");
  if (loss.requires_grad()) tape.backward(loss);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].numel(); ++i) coords.emplace_back(p, i);
  }
  if (opt.max_coords && coords.size() > opt.max_coords) {
    Rng rng(opt.seed);
    for (std::size_t i = 0; i < opt.max_coords; ++i) {
      std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    }
    coords.resize(opt.max_coords);
  }

  // Central-difference roundoff grows with |f|, so the floor does too.
  const double floor = opt.floor * std::max(1.0, std::abs(loss.item()));
  GradCheckReport rep;
  for (const auto& [p, i] : coords) {
    Tensor& t = params[p];
    const double analytic = t.has_grad() ? t.grad()[i] : 0.0;
    auto data = t.mutable_data();
    const double orig = data[i];
    data[i] = orig + opt.step;
    const double fp = eval_scalar(f);
    data[i] = orig - opt.step;
    const double fm = eval_scalar(f);
    data[i] = orig;
    const double numeric = (fp - fm) / (2.0 * opt.step);
    const double abs_err = std::abs(analytic - numeric);
    const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), floor});
    rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
    if (rel > rep.max_rel_error || rep.checked == 0) {
      rep.max_rel_error = std::max(rep.max_rel_error, rel);
      std::ostringstream os;
      os << p << '[' << i << "]: " << analytic << " vs " << numeric;
      rep.worst = os.str();
    }
    ++rep.checked;
  }
  rep.passed = rep.max_rel_error < tol;
  for (Tensor& p : params) p.zero_grad();
  return rep;
}

}  // namespace m3s
