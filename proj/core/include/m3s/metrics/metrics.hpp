// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "m3s/tensor/tensor.hpp"

namespace m3s::metrics {

double mae(std::span<const double> y, std::span<const double> yhat);
double mse(std::span<const double> y, std::span<const double> yhat);
/// RMSE / (max(y) - min(y)) * 100; `range` overrides the denominator.
double nrmse(std::span<const double> y, std::span<const double> yhat, std::optional<double> range = std::nullopt);
double r2(std::span<const double> y, std::span<const double> yhat);

struct SegScores {
  double precision = 0.0;
  double recall = 0.0;
  double miou = 0.0;
};

/// Precision and recall pool TP/FP/FN over `positive` classes; MIoU averages
/// every class with a nonzero denominator.
SegScores seg_metrics(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, std::size_t classes,
                      const std::vector<std::int32_t>& positive = {0, 1});

/// Per-pixel argmax over the class axis of [F, C, H, W] logits.
std::vector<std::int32_t> argmax_classes(const Tensor& logits);

/// Thin wrappers over the tape losses.
Tensor mse_loss(const Tensor& pred, const Tensor& target);
Tensor bce_loss(const Tensor& logits, const Tensor& targets);

struct MetricRow {
  std::size_t horizon_step = 0;  // 1-based; 0 marks the aggregate row
  double mae = 0.0, mse = 0.0, nrmse_pct = 0.0, r2 = 0.0;
};

struct MetricReport {
  std::vector<MetricRow> steps;
  MetricRow aggregate;
  std::optional<SegScores> segmentation;

  void write_csv(std::ostream& os) const;
  std::string summary() const;
};

/// y and yhat are [N, horizon] row-major in physical units. NRMSE uses the
/// range of all of y for every row.
MetricReport forecast_report(std::span<const double> y, std::span<const double> yhat, std::size_t horizon);

}  // namespace m3s::metrics
