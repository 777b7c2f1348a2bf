// SPDX-License-Identifier: Apache-2.0
#include "m3s/training/model.hpp"

#include "m3s/data/dataset.hpp"
#include "m3s/error.hpp"
#include "m3s/tensor/ops.hpp"

namespace m3s::training {
namespace {

visual::EncoderKind encoder_for(Scheme s) {
  switch (s) {
    case Scheme::B: return visual::EncoderKind::Plain;
    case Scheme::C: return visual::EncoderKind::MpcmLike;
    default: return visual::EncoderKind::Mpcs;
  }
}

fusion::FusionMode fusion_for(Scheme s) {
  switch (s) {
    case Scheme::A: return fusion::FusionMode::TemporalOnly;
    case Scheme::B:
    case Scheme::C:
    case Scheme::D: return fusion::FusionMode::LinearConcat;
    case Scheme::F: return fusion::FusionMode::MlpConcat;
    default: return fusion::FusionMode::CrossScan;
  }
}

}  // namespace

Model::Model(const ExperimentConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.scheme == Scheme::Persistence) return;
  Rng rng(cfg_.seed);
  nn::ParamBuilder pb(params_, rng);
  if (cfg_.uses_images()) {
    visual::ScsmConfig sc;
    sc.ratio = cfg_.partial_ratio;
    visual_.emplace(pb.sub("visual"), encoder_for(cfg_.scheme), cfg_.width, cfg_.d_model, cfg_.state, sc);
  }
  temporal::SifrConfig tc;
  tc.lookback = cfg_.lookback;
  tc.horizon = cfg_.horizon;
  tc.variables = data::kMeteoColumns;
  tc.d_model = cfg_.d_model;
  tc.scales = cfg_.scales;
  tc.top_k = cfg_.top_k;
  tc.window = cfg_.window;
  tc.interval = cfg_.interval;
  tc.depth = cfg_.depth;
  tc.heads = cfg_.heads;
  tc.coarsest_head_only = cfg_.scheme == Scheme::E;
  temporal_.emplace(pb.sub("temporal"), tc);
  fusion_.emplace(pb.sub("fusion"), fusion_for(cfg_.scheme), cfg_.d_model, cfg_.state, cfg_.horizon, cfg_.heads);
}

ModelOutput Model::forward(const Tensor& series, const Tensor& frames) const {
  if (series.rank() != 2 || series.dim(0) != cfg_.lookback || series.dim(1) != data::kMeteoColumns) {
    throw ShapeError("model expects series [" + std::to_string(cfg_.lookback) + ", 8], got " +
                     shape_str(series.shape()));
  }
  ModelOutput out;
  if (cfg_.scheme == Scheme::Persistence) {
    out.forecast = persistence_forecast(series, cfg_.horizon);
    return out;
  }
  const Tensor x_i = (*temporal_)(series).x_i;
  Tensor x_s;
  if (visual_) {
    if (!frames.defined() || frames.rank() != 4 || frames.dim(0) != cfg_.frame_count()) {
      throw ShapeError("model expects " + std::to_string(cfg_.frame_count()) + " frames");
    }
    auto vo = (*visual_)(frames);
    x_s = fusion::left_pad_replicate(vo.x_s, cfg_.lookback);
    out.seg_logits = vo.seg_logits;
  }
  // The decoder predicts the change from the last observed GHI.
  out.forecast = add((*fusion_)(x_s, x_i), persistence_forecast(series, cfg_.horizon));
  return out;
}

Tensor Model::segment(const Tensor& frames) const {
  if (!visual_) throw ConfigError("scheme " + scheme_name(cfg_.scheme) + " has no visual branch");
  const auto f = visual_->encoder(frames);
  return visual_->seg(visual_->decoder(f).d1, frames.dim(2), frames.dim(3));
}

std::unique_ptr<Model> build_model(const ExperimentConfig& cfg) { return std::make_unique<Model>(cfg); }

Tensor persistence_forecast(const Tensor& series, std::size_t horizon) {
  if (series.rank() != 2 || series.dim(0) == 0) throw ShapeError("persistence needs a non-empty [L, V] series");
  const double last = series.data()[(series.dim(0) - 1) * series.dim(1)];
  return Tensor::full({horizon, 1}, last);
}

}  // namespace m3s::training
