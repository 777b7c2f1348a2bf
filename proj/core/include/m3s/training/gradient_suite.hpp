// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m3s/tensor/gradcheck.hpp"

namespace m3s::training {

struct GradSuiteResult {
  std::string name;
  double tolerance = 0.0;
  GradCheckReport report;
  double seconds = 0.0;
};

/// Names of the checked blocks, in run order.
std::vector<std::string> gradient_suite_names();

/// Finite-difference checks of every trainable block at toy widths against
/// central differences. Block checks use 1e-4 and the end-to-end composite
/// 1e-3 as the relative tolerance. An empty `only` runs every case.
std::vector<GradSuiteResult> run_gradient_suite(std::uint64_t seed = 1, const std::vector<std::string>& only = {});

}  // namespace m3s::training
