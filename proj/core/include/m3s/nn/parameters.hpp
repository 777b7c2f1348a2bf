// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "m3s/tensor/rng.hpp"
#include "m3s/tensor/tensor.hpp"

namespace m3s::nn {

struct NamedParameter {
  std::string name;
  Tensor value;
};

/// Ordered registry of trainable tensors. Registration order is the
/// serialization order, so it must not depend on anything but the config.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Tensor value);
  const std::vector<NamedParameter>& all() const { return params_; }
  std::vector<Tensor> tensors() const;
  /// Total scalar count.
  std::size_t size() const;
  bool contains(const std::string& name) const;
  Tensor get(const std::string& name) const;
  void zero_grad();

 private:
  std::vector<NamedParameter> params_;
};

/// Hierarchical naming plus initialization policy over a ParameterSet.
class ParamBuilder {
 public:
  ParamBuilder(ParameterSet& set, Rng& rng, std::string prefix = {})
      : set_(&set), rng_(&rng), prefix_(std::move(prefix)) {}

  ParamBuilder sub(const std::string& name) const;

  /// Kaiming-uniform with unit gain: U(-sqrt(3/fan_in), sqrt(3/fan_in)).
  Tensor weight(const std::string& name, Shape shape, std::size_t fan_in);
  Tensor constant(const std::string& name, Shape shape, double value);
  Tensor zeros(const std::string& name, Shape shape) { return constant(name, std::move(shape), 0.0); }
  Tensor uniform(const std::string& name, Shape shape, double lo, double hi);

  Rng& rng() { return *rng_; }
  const std::string& prefix() const { return prefix_; }

 private:
  std::string full(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }
  ParameterSet* set_;
  Rng* rng_;
  std::string prefix_;
};

}  // namespace m3s::nn
