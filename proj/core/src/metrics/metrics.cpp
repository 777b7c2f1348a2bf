// SPDX-License-Identifier: Apache-2.0
#include "m3s/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "m3s/error.hpp"
#include "m3s/tensor/ops.hpp"

namespace m3s::metrics {
namespace {

void check_pair(std::span<const double> y, std::span<const double> yhat, const char* what) {
  if (y.size() != yhat.size() || y.empty()) {
    throw ContractError(std::string(what) + ": need equal nonzero lengths, got " + std::to_string(y.size()) +
                        " and " + std::to_string(yhat.size()));
  }
}

}  // namespace

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - yhat[i]);
  return acc / static_cast<double>(y.size());
}

double mse(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return acc / static_cast<double>(y.size());
}

double nrmse(std::span<const double> y, std::span<const double> yhat, std::optional<double> range) {
  check_pair(y, yhat, "nrmse");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double r = range.value_or(*hi - *lo);
  if (!(r > 0.0)) throw ContractError("nrmse: ground truth has zero range");
  return std::sqrt(mse(y, yhat)) / r * 100.0;
}

double r2(std::span<const double> y, std::span<const double> yhat) {
  check_pair(y, yhat, "r2");
  if (y.size() < 2) throw ContractError("r2: need at least two samples");
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double ss_tot = 0.0, ss_res = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_tot += (y[i] - mean) * (y[i] - mean);
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  }
  if (!(ss_tot > 0.0)) throw ContractError("r2: ground truth has zero variance");
  return 1.0 - ss_res / ss_tot;
}

SegScores seg_metrics(std::span<const std::int32_t> pred, std::span<const std::int32_t> truth, std::size_t classes,
                      const std::vector<std::int32_t>& positive) {
  if (pred.size() != truth.size()) throw ContractError("seg_metrics: prediction and truth sizes differ");
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = pred[i], t = truth[i];
    if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= classes || static_cast<std::size_t>(t) >= classes) {
      throw ContractError("seg_metrics: label outside [0, " + std::to_string(classes) + ")");
    }
    if (p == t) {
      ++tp[static_cast<std::size_t>(p)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  SegScores s;
  std::size_t ptp = 0, pfp = 0, pfn = 0;
  for (auto c : positive) {
    if (c < 0 || static_cast<std::size_t>(c) >= classes) continue;
    ptp += tp[static_cast<std::size_t>(c)];
    pfp += fp[static_cast<std::size_t>(c)];
    pfn += fn[static_cast<std::size_t>(c)];
  }
  s.precision = ptp + pfp > 0 ? static_cast<double>(ptp) / static_cast<double>(ptp + pfp) : 0.0;
  s.recall = ptp + pfn > 0 ? static_cast<double>(ptp) / static_cast<double>(ptp + pfn) : 0.0;
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t den = tp[c] + fp[c] + fn[c];
    if (den == 0) continue;
    total += static_cast<double>(tp[c]) / static_cast<double>(den);
    ++present;
  }
  s.miou = present > 0 ? total / static_cast<double>(present) : 0.0;
  return s;
}

std::vector<std::int32_t> argmax_classes(const Tensor& logits) {
  if (logits.rank() != 4) throw ShapeError("argmax_classes expects [F, C, H, W]");
  const std::size_t F = logits.dim(0), C = logits.dim(1), HW = logits.dim(2) * logits.dim(3);
  const auto d = logits.data();
  std::vector<std::int32_t> out(F * HW);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t i = 0; i < HW; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < C; ++c) {
        if (d[(f * C + c) * HW + i] > d[(f * C + best) * HW + i]) best = c;
      }
      out[f * HW + i] = static_cast<std::int32_t>(best);
    }
  }
  return out;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) { return m3s::mse_loss(pred, target); }
Tensor bce_loss(const Tensor& logits, const Tensor& targets) { return m3s::bce_with_logits(logits, targets); }

MetricReport forecast_report(std::span<const double> y, std::span<const double> yhat, std::size_t horizon) {
  check_pair(y, yhat, "forecast_report");
  if (horizon == 0 || y.size() % horizon != 0) throw ContractError("forecast_report: size is not a multiple of horizon");
  const std::size_t n = y.size() / horizon;
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  const double range = *hi - *lo;
  MetricReport rep;
  std::vector<double> ys(n), ps(n);
  for (std::size_t h = 0; h < horizon; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      ys[i] = y[i * horizon + h];
      ps[i] = yhat[i * horizon + h];
    }
    rep.steps.push_back({h + 1, mae(ys, ps), mse(ys, ps), nrmse(ys, ps, range), r2(ys, ps)});
  }
  rep.aggregate = {0, mae(y, yhat), mse(y, yhat), nrmse(y, yhat, range), r2(y, yhat)};
  return rep;
}

void MetricReport::write_csv(std::ostream& os) const {
  os << "horizon_step,mae,mse,nrmse_pct,r2\n" << std::setprecision(10);
  for (const auto& r : steps) os << r.horizon_step << ',' << r.mae << ',' << r.mse << ',' << r.nrmse_pct << ',' << r.r2 << '\n';
  const auto& a = aggregate;
  os << "all," << a.mae << ',' << a.mse << ',' << a.nrmse_pct << ',' << a.r2 << '\n';
}

std::string MetricReport::summary() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "MAE " << aggregate.mae << " W/m^2\n"
     << "MSE " << aggregate.mse << " W^2/m^4\n"
     << "NRMSE " << aggregate.nrmse_pct << " %\n"
     << "R2 " << aggregate.r2 << "\n";
  if (segmentation) {
    os << "P " << segmentation->precision << "\nR " << segmentation->recall << "\nMIoU " << segmentation->miou << "\n";
  }
  return os.str();
}

}  // namespace m3s::metrics
