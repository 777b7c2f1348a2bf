// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "m3s/tensor/rng.hpp"
#include "m3s/training/model.hpp"

namespace {

using namespace m3s;

training::ExperimentConfig toy(training::Scheme scheme) {
  training::ExperimentConfig c;
  c.scheme = scheme;
  c.lookback = 24;
  c.frames = 3;
  c.image_size = 32;
  c.width = 4;
  c.d_model = 16;
  c.state = 8;
  c.scales = 1;
  c.top_k = 2;
  c.depth = 1;
  c.heads = 2;
  return c;
}

Tensor random(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

/// One training step's forward and backward pass for a single window.
void BM_ForwardBackward(benchmark::State& state) {
  const auto scheme = static_cast<training::Scheme>(state.range(0));
  training::Model model(toy(scheme));
  Rng rng(9);
  Tensor series = random({24, 8}, rng, -1.0, 1.0);
  Tensor frames = random({3, 3, 32, 32}, rng, 0.0, 1.0);
  Tensor target = random({6, 1}, rng, -1.0, 1.0);
  for (auto _ : state) {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = mse_loss(model.forward(series, frames).forecast, target);
    }
    tape.backward(loss);
  }
  state.SetLabel(training::scheme_name(scheme));
}
BENCHMARK(BM_ForwardBackward)
    ->Arg(static_cast<int>(training::Scheme::Full))
    ->Arg(static_cast<int>(training::Scheme::F))
    ->Arg(static_cast<int>(training::Scheme::A))
    ->Unit(benchmark::kMillisecond);

void BM_ForwardDefaultWidths(benchmark::State& state) {
  training::ExperimentConfig cfg;
  cfg.frames = 1;
  training::Model model(cfg);
  Rng rng(10);
  Tensor series = random({cfg.lookback, 8}, rng, -1.0, 1.0);
  Tensor frames = random({1, 3, 64, 64}, rng, 0.0, 1.0);
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(series, frames).forecast);
}
BENCHMARK(BM_ForwardDefaultWidths)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
