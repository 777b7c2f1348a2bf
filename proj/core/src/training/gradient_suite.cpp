// SPDX-License-Identifier: Apache-2.0
#include "m3s/training/gradient_suite.hpp"

#include <algorithm>
#include <chrono>
#include <functional>

#include "m3s/error.hpp"
#include "m3s/fusion/mmif.hpp"
#include "m3s/fusion/ssm.hpp"
#include "m3s/nn/parameters.hpp"
#include "m3s/temporal/sifr.hpp"
#include "m3s/tensor/ops.hpp"
#include "m3s/tensor/rng.hpp"
#include "m3s/training/model.hpp"
#include "m3s/visual/mpcs.hpp"

namespace m3s::training {
namespace {

constexpr double kBlockTol = 1e-4;
constexpr double kCompositeTol = 1e-3;
constexpr std::size_t kMaxCoords = 1000;

Tensor random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

/// Weighted sum with fixed random weights, so every output element matters.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  Rng local(seed);
  return sum(mul(y, random(y.shape(), local, 0.5, 1.5)));
}

std::vector<Tensor> with(const nn::ParameterSet& ps, std::initializer_list<Tensor> extra) {
  auto out = ps.tensors();
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

struct Case {
  std::string name;
  double tol;
  std::function<GradCheckReport(Rng&)> run;
};

GradCheckReport check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double tol) {
  GradCheckOptions opt;
  opt.max_coords = kMaxCoords;
  return finite_difference_check(f, params, tol, opt);
}

std::vector<Case> cases() {
  std::vector<Case> out;
  out.push_back({"conv_stem", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   visual::VisualEncoder enc(pb, visual::EncoderKind::Mpcs, 2, {});
                   Tensor img = random({1, 3, 8, 8}, rng, 0.0, 1.0);
                   std::vector<Tensor> params;
                   for (const auto& p : ps.all()) {
                     if (p.name.rfind("stem.", 0) == 0) params.push_back(p.value);
                   }
                   params.push_back(img);
                   return check([&] { return probe(gelu(enc.stem(img))); }, params, kBlockTol);
                 }});
  for (auto kind : {visual::BlockKind::Mspc, visual::BlockKind::Mspa}) {
    out.push_back({kind == visual::BlockKind::Mspc ? "mspc" : "mspa", kBlockTol, [kind](Rng& rng) {
                     nn::ParameterSet ps;
                     nn::ParamBuilder pb(ps, rng);
                     visual::ScsmBlock blk(pb, kind, 8, {});
                     Tensor x = random({1, 8, 8, 8}, rng);
                     return check([&] { return probe(blk(x)); }, with(ps, {x}), kBlockTol);
                   }});
  }
  out.push_back({"csia", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   visual::Csia csia(pb, 3);
                   Tensor a = random({1, 3, 3, 3}, rng), b = random({1, 3, 3, 3}, rng);
                   return check([&] { return probe(csia(a, b)); }, with(ps, {a, b}), kBlockTol);
                 }});
  out.push_back({"ce", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   visual::ChannelExcitation ce(pb, 3, 1.0);
                   Tensor x = random({1, 6, 3, 3}, rng);
                   return check([&] { return probe(ce(x)); }, with(ps, {x}), kBlockTol);
                 }});
  out.push_back({"m2b", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   fusion::SelectiveSsm m2b(pb, 4, 3);
                   Tensor tokens = random({16, 4}, rng);
                   return check([&] { return probe(m2b(tokens)); }, with(ps, {tokens}), kBlockTol);
                 }});
  out.push_back({"csa", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   temporal::ChannelSelfAttention csa(pb, 6);
                   Tensor x = random({6, 4}, rng);
                   return check([&] { return probe(csa(x)); }, with(ps, {x}), kBlockTol);
                 }});
  out.push_back({"dense_msa", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   temporal::MsaBlock blk(pb, 4, 2);
                   Tensor z = random({4, 3, 4}, rng);
                   return check([&] { return probe(temporal::dense_msa(blk, z, 2)); }, with(ps, {z}),
                                kBlockTol);
                 }});
  out.push_back({"sparse_msa", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   temporal::MsaBlock blk(pb, 4, 2);
                   Tensor z = random({4, 3, 4}, rng);
                   return check([&] { return probe(temporal::sparse_msa(blk, z, 2)); }, with(ps, {z}),
                                kBlockTol);
                 }});
  out.push_back({"ensemble_heads", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   temporal::EnsembleHeads heads(pb, {8, 4}, 10);
                   Tensor h0 = random({8, 3}, rng), h1 = random({4, 3}, rng);
                   return check([&] { return probe(heads({h0, h1})); }, with(ps, {h0, h1}), kBlockTol);
                 }});
  out.push_back({"cross_modal_scan", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   fusion::SelectiveSsm s(pb.sub("s"), 4, 3), i(pb.sub("i"), 4, 3);
                   Tensor xs = random({7, 4}, rng), xi = random({7, 4}, rng);
                   return check(
                       [&] {
                         auto [ys, yi] = fusion::cross_modal_block(s, i, xs, xi);
                         return add(probe(ys, 1), probe(yi, 2));
                       },
                       with(ps, {xs, xi}), kBlockTol);
                 }});
  out.push_back({"decoder", kBlockTol, [](Rng& rng) {
                   nn::ParameterSet ps;
                   nn::ParamBuilder pb(ps, rng);
                   fusion::ForecastDecoder dec(pb, 4, 3, 2);
                   Tensor mem = random({9, 4}, rng);
                   return check([&] { return probe(dec(mem)); }, with(ps, {mem}), kBlockTol);
                 }});
  out.push_back({"mse_loss", kBlockTol, [](Rng& rng) {
                   Tensor p = random({6, 1}, rng), t = random({6, 1}, rng);
                   return check([&] { return mse_loss(p, t); }, {p, t}, kBlockTol);
                 }});
  out.push_back({"bce_loss", kBlockTol, [](Rng& rng) {
                   Tensor p = random({2, 4, 3, 3}, rng, -3.0, 3.0), y = random({2, 4, 3, 3}, rng, 0.0, 1.0);
                   return check([&] { return bce_with_logits(p, y); }, {p}, kBlockTol);
                 }});
  out.push_back({"end_to_end", kCompositeTol, [](Rng& rng) {
                   ExperimentConfig cfg;
                   cfg.lookback = 16;
                   cfg.frames = 2;
                   cfg.image_size = 32;
                   cfg.width = 2;
                   cfg.d_model = 8;
                   cfg.state = 4;
                   cfg.scales = 1;
                   cfg.top_k = 2;
                   cfg.window = 2;
                   cfg.interval = 2;
                   cfg.depth = 1;
                   cfg.heads = 2;
                   Model model(cfg);
                   Tensor series = random({16, 8}, rng);
                   Tensor frames = random({2, 3, 32, 32}, rng, 0.0, 1.0);
                   Tensor target = random({6, 1}, rng);
                   Tensor masks = random({2, 4, 32, 32}, rng, 0.0, 1.0);
                   return check(
                       [&] {
                         const auto out = model.forward(series, frames);
                         return add(mse_loss(out.forecast, target),
                                    scale(bce_with_logits(out.seg_logits, masks), cfg.beta));
                       },
                       model.params().tensors(), kCompositeTol);
                 }});
  return out;
}

}  // namespace

std::vector<std::string> gradient_suite_names() {
  std::vector<std::string> names;
  for (const auto& c : cases()) names.push_back(c.name);
  return names;
}

std::vector<GradSuiteResult> run_gradient_suite(std::uint64_t seed, const std::vector<std::string>& only) {
  const auto all = cases();
  for (const auto& name : only) {
    if (std::none_of(all.begin(), all.end(), [&](const Case& c) { return c.name == name; })) {
      throw ConfigError("unknown gradient check '" + name + "'");
    }
  }
  std::vector<GradSuiteResult> results;
  Rng master(seed);
  for (const auto& c : all) {
    Rng rng = master.split();
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    GradSuiteResult r{c.name, c.tol, c.run(rng), 0.0};
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace m3s::training
