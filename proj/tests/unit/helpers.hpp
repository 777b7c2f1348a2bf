// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gtest/gtest.h>

#include <functional>
#include <vector>

#include "m3s/tensor/gradcheck.hpp"
#include "m3s/tensor/ops.hpp"
#include "m3s/tensor/rng.hpp"
#include "m3s/tensor/tensor.hpp"

namespace m3s::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

/// Reduces `y` against fixed random weights so every output element feeds the
/// scalar with a distinct coefficient.
inline Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = random_tensor(y.shape(), rng, 0.5, 1.5);
  return sum(mul(y, w));
}

inline void expect_grad_ok(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double tol = 1e-4,
                           std::size_t max_coords = 0) {
  GradCheckOptions opt;
  opt.max_coords = max_coords;
  const auto rep = finite_difference_check(f, params, tol, opt);
  EXPECT_TRUE(rep.passed) << "max rel " << rep.max_rel_error << " at " << rep.worst;
  EXPECT_GT(rep.checked, 0u);
}

inline void expect_near_all(std::span<const double> a, std::span<const double> b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

inline void expect_near_all(const Tensor& a, std::span<const double> b, double tol) {
  expect_near_all(a.data(), b, tol);
}

inline void expect_near_all(const Tensor& a, const Tensor& b, double tol) { expect_near_all(a.data(), b.data(), tol); }

}  // namespace m3s::test
