// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>

#include "m3s/fusion/mmif.hpp"
#include "m3s/nn/parameters.hpp"
#include "m3s/temporal/sifr.hpp"
#include "m3s/training/config.hpp"
#include "m3s/visual/mpcs.hpp"

namespace m3s::training {

struct ModelOutput {
  Tensor forecast;    // [horizon, 1], normalized GHI
  Tensor seg_logits;  // [frames, 4, H, W]; undefined without a visual branch
};

/// The network a scheme prescribes, with its parameters.
class Model {
 public:
  /// Validates the config. Initialisation draws from Rng(cfg.seed).
  explicit Model(const ExperimentConfig& cfg);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Forecast = decoder output + last observed normalized GHI.
  /// series [lookback, 8] normalized; frames [frames, 3, H, W] in [0, 1]
  /// (ignored and may be undefined when the scheme has no visual branch).
  ModelOutput forward(const Tensor& series, const Tensor& frames) const;
  /// Segmentation logits only.
  Tensor segment(const Tensor& frames) const;

  const ExperimentConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  bool has_visual() const { return visual_.has_value(); }

 private:
  ExperimentConfig cfg_;
  nn::ParameterSet params_;
  std::optional<visual::VisualBranch> visual_;
  std::optional<temporal::SifrNet> temporal_;
  std::optional<fusion::FusionHead> fusion_;
};

std::unique_ptr<Model> build_model(const ExperimentConfig& cfg);

/// y_hat[j] = series[lookback - 1, 0] for every step.
Tensor persistence_forecast(const Tensor& series, std::size_t horizon);

}  // namespace m3s::training
