// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "m3s/tensor/tensor.hpp"

namespace m3s {

struct GradCheckOptions {
  double step = 1e-5;
  /// Gradients below floor * max(1, |f|) are compared on an absolute scale:
  /// rel = |a - n| / max(|a|, |n|, floor * max(1, |f|)).
  double floor = 1e-5;
  /// Checks at most this many coordinates, sampled without replacement by
  /// `seed`. Zero checks every coordinate.
  std::size_t max_coords = 0;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
  std::string worst;  // "<param index>[<flat index>]: analytic vs numeric"
};

/// Compares reverse-mode gradients of the scalar `f` against central finite
/// differences in every tensor of `params`. `f` is re-evaluated with each
/// coordinate perturbed; it must rebuild its graph from the current values.
GradCheckReport finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                                        double tol, const GradCheckOptions& opt = {});

}  // namespace m3s
