// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "m3s/fusion/ssm.hpp"
#include "m3s/tensor/ops.hpp"
#include "m3s/tensor/rng.hpp"

namespace {

using namespace m3s;

Tensor random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random({n, n}, rng), b = random({n, n}, rng);
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

void BM_Conv2d3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor x = random({1, c, 32, 32}, rng), w = random({c, c, 3, 3}, rng);
  Conv2dOptions spec;
  spec.padding = 1;
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, spec));
}
BENCHMARK(BM_Conv2d3x3)->Arg(8)->Arg(32);

void BM_SelectiveScan(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 32, n = 16;
  Rng rng(3);
  fusion::ScanInputs in{random({len, d}, rng), random({len, d}, rng, 0.01, 0.2), random({n}, rng, -2.0, -0.1),
                        random({len, n}, rng), random({len, n}, rng), random({d}, rng)};
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(fusion::selective_scan(in));
}
BENCHMARK(BM_SelectiveScan)->Arg(102)->Arg(1024);

void BM_RfftAmplitudes(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  Tensor x = random({len, 128}, rng);
  NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(rfft_amplitudes(x, 0));
}
BENCHMARK(BM_RfftAmplitudes)->Arg(96)->Arg(97)->Arg(1024);

void BM_SoftmaxBackward(benchmark::State& state) {
  Rng rng(5);
  Tensor x = random({256, 256}, rng);
  Tensor w = random({256, 256}, rng);
  x.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = sum(mul(softmax(x, 1), w));
    }
    tape.backward(loss);
  }
}
BENCHMARK(BM_SoftmaxBackward);

}  // namespace
