// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "m3s/error.hpp"
#include "m3s/nn/layers.hpp"
#include "m3s/tensor/fft.hpp"
#include "m3s/tensor/tensor_io.hpp"

namespace m3s {
namespace {

using test::random_tensor;

TEST(Fft, MatchesNaiveDftForEveryLength) {
  Rng rng(21);
  for (std::size_t L = 2; L <= 128; ++L) {
    std::vector<double> x(L);
    for (auto& v : x) v = rng.uniform(-3.0, 3.0);
    const auto fast = fft::dft(x);
    const auto ref = fft::naive_dft(x);
    double scale = 0.0;
    for (const auto& c : ref) scale = std::max(scale, std::abs(c));
    for (std::size_t f = 0; f < L; ++f) {
      EXPECT_LE(std::abs(fast[f] - ref[f]), 1e-9 * scale) << "L=" << L << " f=" << f;
    }
    const Tensor amps_t = rfft_amplitudes(Tensor::from({L}, x), 0);
    const auto amps = amps_t.data();
    ASSERT_EQ(amps.size(), L / 2 + 1);
    for (std::size_t f = 0; f < amps.size(); ++f) EXPECT_LE(std::abs(amps[f] - std::abs(ref[f])), 1e-9 * scale);
  }
}

TEST(Fft, Radix2RoundTrip) {
  Rng rng(22);
  std::vector<fft::Complex> a(64);
  for (auto& c : a) c = {rng.normal(), rng.normal()};
  auto b = a;
  fft::radix2(b);
  fft::radix2(b, true);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(std::abs(b[i] - a[i]), 0.0, 1e-12);
  EXPECT_EQ(fft::next_pow2(33), 64u);
  EXPECT_TRUE(fft::is_pow2(128));
  EXPECT_FALSE(fft::is_pow2(96));
}

TEST(GradCheck, TwoLayerMlpFiftyParams) {
  nn::ParameterSet ps;
  Rng rng(5);
  nn::ParamBuilder pb(ps, rng);
  nn::Mlp mlp(pb.sub("mlp"), 3, 8, 2);
  // Move biases off zero so the bias paths are exercised.
  for (Tensor p : ps.tensors()) {
    for (auto& v : p.mutable_data()) v += rng.uniform(-0.3, 0.3);
  }
  ASSERT_EQ(ps.size(), 50u);
  Tensor x = random_tensor({6, 3}, rng);
  Tensor y = random_tensor({6, 2}, rng);
  auto rep = finite_difference_check([&] { return mse_loss(mlp(x), y); }, ps.tensors(), 1e-4);
  EXPECT_TRUE(rep.passed) << rep.worst;
  EXPECT_EQ(rep.checked, 50u);
}

TEST(GradCheck, ConstantFunction) {
  Tensor p = Tensor::from({3}, {1, 2, 3});
  auto rep = finite_difference_check([] { return Tensor::scalar(4.0); }, {p}, 1e-4);
  EXPECT_TRUE(rep.passed);
  EXPECT_EQ(rep.max_rel_error, 0.0);
}

TEST(GradCheck, WrongBackwardRuleFails) {
  // y = x^2 recorded with the derivative 3x instead of 2x.
  auto bad_square = [](const Tensor& x) {
    std::vector<double> out;
    for (double v : x.data()) out.push_back(v * v);
    Tensor y = Tensor::from(x.shape(), out);
    if (Tape* tape = detail::recording_tape({&x})) {
      y.set_requires_grad(true);
      tape->record({x}, y, [xi = x.impl(), yi = y.impl()] {
        if (xi->grad.empty()) xi->grad.assign(xi->data.size(), 0.0);
        for (std::size_t i = 0; i < xi->data.size(); ++i) xi->grad[i] += 3.0 * xi->data[i] * yi->grad[i];
      });
    }
    return y;
  };
  Tensor p = Tensor::from({2}, {0.7, -1.2});
  auto rep = finite_difference_check([&] { return sum(bad_square(p)); }, {p}, 1e-4);
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.max_rel_error, 0.1);
}

TEST(GradCheck, NonFiniteFunctionThrows) {
  Tensor p = Tensor::from({1}, {1.0});
  EXPECT_THROW(finite_difference_check([] { return Tensor::scalar(std::nan("")); }, {p}, 1e-4), NumericError);
}

TEST(TensorIo, RoundTripAndLayout) {
  Rng rng(9);
  Tensor t = random_tensor({2, 3, 1}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 8u + 4u + 3u * 8u + 6u * 8u);
  EXPECT_EQ(bytes.substr(0, 8), "M3STNSR1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3u);
  Tensor back = read_tensor(ss);
  EXPECT_EQ(back.shape(), t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(back.data()[i], t.data()[i]);
}

TEST(TensorIo, RejectsCorruptRecords) {
  std::stringstream bad("XXXXXXXX\x01\x00\x00\x00");
  EXPECT_THROW(read_tensor(bad), DataError);
  std::stringstream ss;
  write_tensor(ss, Tensor::zeros({4}));
  std::string s = ss.str();
  std::stringstream trunc(s.substr(0, s.size() - 3));
  EXPECT_THROW(read_tensor(trunc), DataError);
}

TEST(Rng, DeterministicAndInRange) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(Rng(42).next_u64(), c.next_u64());
  Rng r(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.index(7), 7u);
  }
}

TEST(Tensor, ConstructionContracts) {
  EXPECT_THROW(Tensor::zeros({2, 0}), ShapeError);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  Tensor t = Tensor::from({2}, {1, 2});
  Tensor alias = t;
  alias.mutable_data()[0] = 9;
  EXPECT_EQ(t.data()[0], 9);
  Tensor deep = t.clone();
  deep.mutable_data()[0] = 1;
  EXPECT_EQ(t.data()[0], 9);
}

}  // namespace
}  // namespace m3s
