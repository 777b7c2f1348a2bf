// SPDX-License-Identifier: Apache-2.0
#include "m3s/nn/layers.hpp"

#include <cmath>

#include "m3s/error.hpp"

namespace m3s::nn {

Linear::Linear(ParamBuilder pb, std::size_t in_dim, std::size_t out_dim, bool with_bias) : in(in_dim), out(out_dim) {
  weight = pb.weight("weight", {in_dim, out_dim}, in_dim);
  if (with_bias) bias = pb.zeros("bias", {out_dim});
}

Tensor Linear::operator()(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.back() != in) {
    throw ShapeError("linear expects last axis " + std::to_string(in) + ", got " + shape_str(s));
  }
  Tensor y;
  if (s.size() == 2) {
    y = matmul(x, weight);
  } else {
    Shape flat{x.numel() / in, in};
    y = matmul(reshape(x, flat), weight);
    Shape out_shape = s;
    out_shape.back() = out;
    y = reshape(y, out_shape);
  }
  if (bias.defined()) y = add(y, bias);
  return y;
}

Conv2d::Conv2d(ParamBuilder pb, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, Conv2dOptions o,
               bool with_bias)
    : opt(o) {
  if (in_ch % o.groups != 0) throw ConfigError("conv channels not divisible by groups");
  const std::size_t cg = in_ch / o.groups;
  weight = pb.weight("weight", {out_ch, cg, kernel, kernel}, cg * kernel * kernel);
  if (with_bias) bias = pb.zeros("bias", {1, out_ch, 1, 1});
}

Conv2d Conv2d::depthwise(ParamBuilder pb, std::size_t channels, std::size_t kernel, std::size_t dilation) {
  if (kernel % 2 == 0) throw ConfigError("depthwise kernels must be odd");
  Conv2dOptions o;
  o.groups = channels;
  o.dilation = dilation;
  o.padding = dilation * (kernel - 1) / 2;
  return Conv2d(std::move(pb), channels, channels, kernel, o);
}

Tensor Conv2d::operator()(const Tensor& x) const {
  Tensor y = conv2d(x, weight, opt);
  if (bias.defined()) y = add(y, bias);
  return y;
}

LayerNorm::LayerNorm(ParamBuilder pb, std::size_t dim) {
  gamma = pb.constant("gamma", {dim}, 1.0);
  beta = pb.zeros("beta", {dim});
}

Mlp::Mlp(ParamBuilder pb, std::size_t in, std::size_t hidden, std::size_t out)
    : fc1(pb.sub("fc1"), in, hidden), fc2(pb.sub("fc2"), hidden, out) {}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  Tensor pe = Tensor::zeros({length, dim});
  auto d = pe.mutable_data();
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double expo = static_cast<double>(2 * (i / 2)) / static_cast<double>(dim);
      const double ang = static_cast<double>(pos) / std::pow(10000.0, expo);
      d[pos * dim + i] = (i % 2 == 0) ? std::sin(ang) : std::cos(ang);
    }
  }
  return pe;
}

}  // namespace m3s::nn
