// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "m3s/nn/parameters.hpp"

namespace m3s::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global L2 gradient-norm bound; <= 0 disables clipping.
  double clip_norm = 1.0;
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamOptions opt = {});

  /// Clips, applies one update from the current gradients and returns the
  /// pre-clip gradient norm. Parameters without a gradient are skipped.
  double step();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamOptions opt_;
  std::size_t t_ = 0;
};

/// Global L2 norm of all accumulated gradients.
double grad_norm(const std::vector<Tensor>& params);

}  // namespace m3s::nn
