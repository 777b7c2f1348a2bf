// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "m3s/data/dataset.hpp"
#include "m3s/metrics/metrics.hpp"
#include "m3s/training/model.hpp"

namespace m3s::training {

/// Normalized view of a dataset with its day-level split and windows.
struct PreparedData {
  const data::Dataset* dataset = nullptr;
  data::NormStats stats;
  std::vector<double> z;   // [rows, 8] z-scores
  std::vector<int> split;  // per row: 0 train, 1 val, 2 test
  std::vector<std::size_t> train, val, test;  // window start rows

  Tensor series(std::size_t start, std::size_t lookback) const;
  /// Normalized GHI targets [horizon, 1].
  Tensor target(std::size_t start, std::size_t lookback, std::size_t horizon) const;
  Tensor frames(std::size_t start, std::size_t lookback, std::size_t count) const;
  /// One-hot masks matching frames(); undefined when the dataset has none.
  Tensor masks(std::size_t start, std::size_t lookback, std::size_t count) const;
};

/// The dataset must outlive the result. Statistics come from training rows.
PreparedData prepare_data(const data::Dataset& ds, const ExperimentConfig& cfg);
/// Same, with normalization statistics taken from a checkpoint.
PreparedData prepare_data(const data::Dataset& ds, const ExperimentConfig& cfg, const data::NormStats& stats);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean total loss over training windows
  double val_loss = 0.0;    // mean normalized forecast MSE over validation windows
  double val_mae = 0.0;     // W/m^2
};

struct TrainLog {
  std::string scheme;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool early_stopped = false;

  void write(std::ostream& os) const;
  /// Throws DataError naming the offending line.
  static TrainLog parse(std::istream& is);
};

struct TrainOptions {
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TrainLog log;
  double seconds = 0.0;
};

/// Mini-batch Adam with early stopping on validation MSE. On return the model
/// holds the best-validation parameters. Throws NumericError on a non-finite
/// loss or gradient.
TrainResult train(Model& model, const PreparedData& data, const TrainOptions& opt = {});

/// Per-sample loss: forecast MSE plus beta times the mask BCE when available.
Tensor sample_loss(const Model& model, const PreparedData& data, std::size_t start);

/// Metrics on denormalized GHI for steps 1..steps (steps <= horizon).
metrics::MetricReport evaluate(const Model& model, const PreparedData& data, const std::vector<std::size_t>& windows,
                               std::size_t steps);

/// Denormalized forecast for one window.
std::vector<double> predict(const Model& model, const PreparedData& data, std::size_t start);

/// Trains only the visual branch on image/mask pairs with the BCE loss.
/// Returns the mean loss of each epoch.
std::vector<double> train_segmentation(Model& model, const std::vector<const data::Image*>& images,
                                       const std::vector<const data::Mask*>& masks, std::size_t epochs);
metrics::SegScores evaluate_segmentation(const Model& model, const std::vector<const data::Image*>& images,
                                         const std::vector<const data::Mask*>& masks);

/// Directory with manifest.txt (config, normalization, parameter shapes) and
/// params.bin (one tensor record per parameter, manifest order).
void save_checkpoint(const std::filesystem::path& dir, const Model& model, const data::NormStats& stats);

struct Checkpoint {
  std::unique_ptr<Model> model;
  data::NormStats stats;
};

/// Throws DataError on unreadable or inconsistent checkpoints.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace m3s::training
