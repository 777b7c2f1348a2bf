// SPDX-License-Identifier: Apache-2.0
#include "m3s/nn/parameters.hpp"

#include <cmath>

#include "m3s/error.hpp"

namespace m3s::nn {

Tensor ParameterSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  value.set_requires_grad(true);
  params_.push_back({name, value});
  return value;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::size_t ParameterSet::size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

Tensor ParameterSet::get(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ConfigError("no parameter named " + name);
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

ParamBuilder ParamBuilder::sub(const std::string& name) const { return ParamBuilder(*set_, *rng_, full(name)); }

Tensor ParamBuilder::weight(const std::string& name, Shape shape, std::size_t fan_in) {
  const double bound = std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  return uniform(name, std::move(shape), -bound, bound);
}

Tensor ParamBuilder::constant(const std::string& name, Shape shape, double value) {
  return set_->add(full(name), Tensor::full(std::move(shape), value));
}

Tensor ParamBuilder::uniform(const std::string& name, Shape shape, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng_->uniform(lo, hi);
  return set_->add(full(name), t);
}

}  // namespace m3s::nn
