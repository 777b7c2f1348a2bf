// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "m3s/error.hpp"
#include "m3s/tensor/fft.hpp"

namespace m3s {
namespace {

using test::expect_grad_ok;
using test::probe;
using test::random_tensor;

// Standard normal CDF by composite Simpson integration of the density from
// -40 to x; shares nothing with the library's erfc path.
double phi_simpson(double x) {
  const double a = -40.0;
  const int n = 200000;
  const double h = (x - a) / n;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
  double s = pdf(a) + pdf(x);
  for (int i = 1; i < n; ++i) s += pdf(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

TEST(Gelu, ClosedFormPoints) {
  const Tensor x = Tensor::from({5}, {0.0, 10.0, -10.0, 1.0, -0.5});
  const Tensor y_t = gelu(x);
  const auto y = y_t.data();
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 10.0, 1e-6);
  EXPECT_NEAR(y[2], 0.0, 1e-6);
  EXPECT_NEAR(y[3], 1.0 * phi_simpson(1.0), 1e-10);
  EXPECT_NEAR(y[4], -0.5 * phi_simpson(-0.5), 1e-10);
}

TEST(Gelu, NonFiniteInputThrows) {
  const Tensor x = Tensor::from({2}, {1.0, std::nan("")});
  EXPECT_THROW(gelu(x), NumericError);
}

TEST(Softmax, Examples) {
  const Tensor a_t = softmax(Tensor::from({3}, {1, 1, 1}), 0);
  const auto a = a_t.data();
  for (double v : a) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  const Tensor b_t = softmax(Tensor::from({2}, {0.0, std::log(2.0)}), 0);
  const auto b = b_t.data();
  EXPECT_NEAR(b[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(b[1], 2.0 / 3.0, 1e-15);
  const Tensor c_t = softmax(Tensor::from({2}, {1000.0, 1000.0}), 0);
  const auto c = c_t.data();
  EXPECT_EQ(c[0], 0.5);
  EXPECT_EQ(c[1], 0.5);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(3);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    Tensor x = random_tensor({3, 4, 5}, rng, -20.0, 20.0);
    Tensor y = softmax(x, axis);
    Tensor s = sum_axis(y, axis);
    for (double v : s.data()) EXPECT_NEAR(v, 1.0, 1e-12);
    for (double v : y.data()) EXPECT_GT(v, 0.0);
    Tensor ys = softmax(add_scalar(x, 123.456), axis);
    test::expect_near_all(y.data(), ys.data(), 1e-12);
  }
  EXPECT_THROW(softmax(Tensor::zeros({2, 2}), 2), ShapeError);
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  Tensor x = random_tensor({1, 1, 3, 3}, rng);
  Tensor w = Tensor::from({1, 1, 1, 1}, {1.0});
  Tensor y = conv2d(x, w);
  EXPECT_EQ(y.shape(), x.shape());
  test::expect_near_all(y.data(), x.data(), 0.0);
}

TEST(Conv2d, DepthwiseOnesMatchesNeighbourhoodSums) {
  Rng rng(2);
  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  Tensor w = Tensor::full({2, 1, 3, 3}, 1.0);
  Conv2dOptions opt;
  opt.padding = 1;
  opt.groups = 2;
  Tensor y = conv2d(x, w, opt);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 4, 4}));
  const auto xd = x.data();
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        double s = 0.0;
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) {
            const int r = i + di, q = j + dj;
            if (r >= 0 && r < 4 && q >= 0 && q < 4) s += xd[c * 16 + r * 4 + q];
          }
        }
        EXPECT_NEAR(y.data()[c * 16 + i * 4 + j], s, 1e-14);
      }
    }
  }
}

TEST(Conv2d, OutputSizeFormula) {
  Tensor x = Tensor::zeros({1, 1, 64, 64});
  Tensor w = Tensor::zeros({1, 1, 3, 3});
  Conv2dOptions opt;
  opt.dilation = 2;
  opt.padding = 2;
  EXPECT_EQ(conv2d(x, w, opt).shape(), (Shape{1, 1, 64, 64}));
  opt = {};
  opt.stride = 2;
  opt.padding = 1;
  EXPECT_EQ(conv2d(x, w, opt).shape(), (Shape{1, 1, 32, 32}));
}

TEST(Conv2d, ShapeErrors) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({2, 2, 1, 1})), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5})), ShapeError);
  Conv2dOptions opt;
  opt.groups = 2;
  EXPECT_THROW(conv2d(Tensor::zeros({1, 3, 4, 4}), Tensor::zeros({3, 1, 1, 1}), opt), ShapeError);
}

TEST(RfftAmplitudes, Examples) {
  auto z = rfft_amplitudes(Tensor::zeros({32}), 0);
  ASSERT_EQ(z.numel(), 17u);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);

  std::vector<double> s(32);
  for (int t = 0; t < 32; ++t) s[t] = std::sin(2.0 * std::numbers::pi * t / 8.0);
  const Tensor a_t = rfft_amplitudes(Tensor::from({32}, s), 0);
  const auto a = a_t.data();
  for (std::size_t f = 0; f < a.size(); ++f) {
    if (f == 4) {
      EXPECT_NEAR(a[f], 16.0, 1e-9);
    } else {
      EXPECT_LT(a[f], 1e-9) << f;
    }
  }

  const Tensor c_t = rfft_amplitudes(Tensor::full({16}, 5.0), 0);

  const auto c = c_t.data();
  EXPECT_NEAR(c[0], 80.0, 1e-12);
  for (std::size_t f = 1; f < c.size(); ++f) EXPECT_LT(c[f], 1e-12);
}

TEST(RfftAmplitudes, AlongInnerAxis) {
  Rng rng(8);
  Tensor x = random_tensor({6, 3}, rng);
  Tensor a = rfft_amplitudes(x, 0);
  ASSERT_EQ(a.shape(), (Shape{4, 3}));
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> col(6);
    for (std::size_t t = 0; t < 6; ++t) col[t] = x.data()[t * 3 + c];
    const auto ref = fft::naive_dft(col);
    for (std::size_t f = 0; f < 4; ++f) EXPECT_NEAR(a.data()[f * 3 + c], std::abs(ref[f]), 1e-12);
  }
}

TEST(Backward, SquareSum) {
  Tensor x = Tensor::from({1}, {3.0}, true);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(square(x));
  }
  backward(tape, loss);
  // Central difference frozen at h = 1e-5: ((3+h)^2 - (3-h)^2) / 2h = 6.
  EXPECT_NEAR(x.grad()[0], 6.0, 1e-9);
}

TEST(Backward, FanOutAccumulates) {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(add(x, x));
  }
  backward(tape, loss);
  for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Backward, DetachedHasNoGrad) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor d = x.detach();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    loss = sum(mul(x, d));
  }
  backward(tape, loss);
  EXPECT_FALSE(d.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(Backward, NonScalarLossThrows) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  Tensor y;
  {
    TapeScope scope(tape);
    y = square(x);
  }
  EXPECT_THROW(backward(tape, y), ContractError);
}

TEST(Backward, NoRecordingOutsideScopeOrUnderNoGrad) {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    NoGradScope ng;
    (void)square(x);
  }
  (void)square(x);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Purity, RepeatedForwardIsBitIdentical) {
  Rng rng(4);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Conv2dOptions opt;
  opt.padding = 1;
  auto f = [&] { return softmax(gelu(conv2d(x, w, opt)), 1); };
  const auto a = f();
  const auto b = f();
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Broadcast, AddRowAndColumn) {
  Tensor a = Tensor::from({2, 1}, {1, 2});
  Tensor b = Tensor::from({3}, {10, 20, 30});
  Tensor c = add(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 3}));
  test::expect_near_all(c.data(), std::vector<double>{11, 21, 31, 12, 22, 32}, 0.0);
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2})), ShapeError);
}

TEST(Matmul, SmallProducts) {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  test::expect_near_all(matmul(a, b), std::vector<double>{58, 64, 139, 154}, 0.0);
  Tensor ab = reshape(concat({a, a}, 0), {2, 2, 3});
  EXPECT_EQ(matmul(ab, b).shape(), (Shape{2, 2, 2}));
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(GatherScatter, InverseOnPermutation) {
  Rng rng(5);
  Tensor x = random_tensor({4, 3}, rng);
  std::vector<std::int64_t> perm = {2, 0, 3, 1};
  Tensor g = gather(x, 0, perm);
  Tensor back = scatter_add(g, 0, perm, 4);
  test::expect_near_all(back.data(), x.data(), 0.0);
  Tensor z = gather(x, 0, {-1});
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(UpsampleBilinear, ConstantAndIdentity) {
  Tensor c = Tensor::full({1, 2, 2, 2}, 3.5);
  const Tensor up = upsample_bilinear(c, 5, 7);
  for (double v : up.data()) EXPECT_NEAR(v, 3.5, 1e-15);
  Rng rng(6);
  Tensor x = random_tensor({1, 1, 3, 4}, rng);
  test::expect_near_all(upsample_bilinear(x, 3, 4), x.data(), 1e-15);
}

TEST(LayerNorm, ZeroMeanUnitVariance) {
  Rng rng(7);
  Tensor x = random_tensor({3, 8}, rng, -5, 5);
  Tensor y = layer_norm(x, Tensor::full({8}, 1.0), Tensor::zeros({8}), 0.0);
  Tensor m = mean_axis(y, 1);
  Tensor v = variance_axis(y, 1);
  for (double a : m.data()) EXPECT_NEAR(a, 0.0, 1e-12);
  for (double a : v.data()) EXPECT_NEAR(a, 1.0, 1e-12);
}

TEST(Losses, Examples) {
  EXPECT_NEAR(bce_with_logits(Tensor::scalar(0.0), Tensor::scalar(0.5)).item(), std::log(2.0), 1e-15);
  EXPECT_LT(bce_with_logits(Tensor::scalar(40.0), Tensor::scalar(1.0)).item(), 1e-15);
  EXPECT_THROW(bce_with_logits(Tensor::scalar(0.0), Tensor::scalar(1.5)), ContractError);
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  Tape tape;
  Tensor l;
  {
    TapeScope s(tape);
    l = mse_loss(x, x.detach());
  }
  EXPECT_EQ(l.item(), 0.0);
  backward(tape, l);
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

// Finite-difference checks, one per differentiable primitive.

class OpGrad : public ::testing::Test {
 protected:
  Rng rng{11};
};

TEST_F(OpGrad, Elementwise) {
  Tensor a = random_tensor({3, 4}, rng, -2, 2);
  Tensor b = random_tensor({4}, rng, 0.5, 2);
  Tensor c = random_tensor({3, 1}, rng, -2, 2);
  expect_grad_ok([&] { return probe(add(a, b)); }, {a, b});
  expect_grad_ok([&] { return probe(sub(a, c)); }, {a, c});
  expect_grad_ok([&] { return probe(mul(a, b)); }, {a, b});
  expect_grad_ok([&] { return probe(mul(c, b)); }, {c, b});
  expect_grad_ok([&] { return probe(scale(neg(add_scalar(a, 0.3)), 1.7)); }, {a});
  expect_grad_ok([&] { return probe(exp(a)); }, {a});
  expect_grad_ok([&] { return probe(log(b)); }, {b});
  expect_grad_ok([&] { return probe(square(a)); }, {a});
  expect_grad_ok([&] { return probe(sigmoid(a)); }, {a});
  expect_grad_ok([&] { return probe(gelu(a)); }, {a});
  expect_grad_ok([&] { return probe(silu(a)); }, {a});
  expect_grad_ok([&] { return probe(softplus(a)); }, {a});
}

TEST_F(OpGrad, Reductions) {
  Tensor a = random_tensor({2, 3, 4}, rng, -2, 2);
  expect_grad_ok([&] { return sum(square(a)); }, {a});
  expect_grad_ok([&] { return mean(exp(a)); }, {a});
  for (std::size_t ax = 0; ax < 3; ++ax) {
    expect_grad_ok([&] { return probe(sum_axis(a, ax)); }, {a});
    expect_grad_ok([&] { return probe(mean_axis(a, ax, true)); }, {a});
    expect_grad_ok([&] { return probe(variance_axis(a, ax)); }, {a});
  }
}

TEST_F(OpGrad, ShapeOps) {
  Tensor a = random_tensor({2, 3, 4}, rng);
  Tensor b = random_tensor({2, 2, 4}, rng);
  expect_grad_ok([&] { return probe(reshape(a, {6, 4})); }, {a});
  expect_grad_ok([&] { return probe(permute(a, {2, 0, 1})); }, {a});
  expect_grad_ok([&] { return probe(transpose(a, 1, 2)); }, {a});
  expect_grad_ok([&] { return probe(concat({a, b}, 1)); }, {a, b});
  expect_grad_ok([&] { return probe(slice(a, 2, 1, 2)); }, {a});
  expect_grad_ok([&] { return probe(gather(a, 1, {2, 0, 2, -1})); }, {a});
  expect_grad_ok([&] { return probe(scatter_add(a, 1, {4, 0, 4}, 5)); }, {a});
}

TEST_F(OpGrad, Matmul) {
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tensor ba = random_tensor({2, 3, 4}, rng);
  Tensor bb = random_tensor({2, 4, 5}, rng);
  expect_grad_ok([&] { return probe(matmul(a, b)); }, {a, b});
  expect_grad_ok([&] { return probe(matmul(ba, bb)); }, {ba, bb});
  expect_grad_ok([&] { return probe(matmul(ba, b)); }, {ba, b});
}

TEST_F(OpGrad, SoftmaxAndLayerNorm) {
  Tensor a = random_tensor({3, 5}, rng, -3, 3);
  Tensor g = random_tensor({5}, rng, 0.5, 1.5);
  Tensor be = random_tensor({5}, rng);
  expect_grad_ok([&] { return probe(softmax(a, 0)); }, {a});
  expect_grad_ok([&] { return probe(softmax(a, 1)); }, {a});
  expect_grad_ok([&] { return probe(layer_norm(a, g, be)); }, {a, g, be});
}

TEST_F(OpGrad, Conv2dVariants) {
  Tensor x = random_tensor({2, 4, 5, 5}, rng);
  Tensor w = random_tensor({6, 2, 3, 3}, rng);
  Tensor dw = random_tensor({4, 1, 3, 3}, rng);
  Conv2dOptions grouped;
  grouped.groups = 2;
  grouped.padding = 1;
  grouped.stride = 2;
  expect_grad_ok([&] { return probe(conv2d(x, w, grouped)); }, {x, w});
  Conv2dOptions dil;
  dil.groups = 4;
  dil.padding = 2;
  dil.dilation = 2;
  expect_grad_ok([&] { return probe(conv2d(x, dw, dil)); }, {x, dw});
}

TEST_F(OpGrad, ResizePoolAndSpectrum) {
  Tensor x = random_tensor({1, 2, 3, 4}, rng);
  expect_grad_ok([&] { return probe(upsample_bilinear(x, 6, 8)); }, {x});
  expect_grad_ok([&] { return probe(upsample_bilinear(x, 5, 3)); }, {x});
  expect_grad_ok([&] { return probe(global_avg_pool(x)); }, {x});
  Tensor s = random_tensor({7, 3}, rng);
  expect_grad_ok([&] { return probe(rfft_amplitudes(s, 0)); }, {s});
  Tensor s2 = random_tensor({2, 8}, rng);
  expect_grad_ok([&] { return probe(rfft_amplitudes(s2, 1)); }, {s2});
}

TEST_F(OpGrad, Losses) {
  Tensor p = random_tensor({4, 2}, rng);
  Tensor t = random_tensor({4, 2}, rng);
  Tensor y = random_tensor({4, 2}, rng, 0, 1);
  expect_grad_ok([&] { return mse_loss(p, t); }, {p, t});
  expect_grad_ok([&] { return bce_with_logits(p, y); }, {p});
}

}  // namespace
}  // namespace m3s
