/* Copyright (c) 2026 The flowdeform Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "flowdeform/tensor.hpp"

namespace flowdeform {

/// A learnable tensor with its gradient accumulator and Adam moments.
template <typename T>
struct Parameter {
  std::string name;
  Tensor4<T> value;
  Tensor4<T> grad;
  Tensor4<T> m;
  Tensor4<T> v;

  Parameter(std::string name_, Shape4 shape)
      : name(std::move(name_)), value(shape), grad(shape), m(shape), v(shape) {}
};

/// Named parameters in insertion order. Addresses are stable for the
/// lifetime of the store.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Parameter<T>& add(const std::string& name, Shape4 shape) {
    if (index_.count(name) != 0) {
      throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    }
    index_[name] = params_.size();
    params_.push_back(std::make_unique<Parameter<T>>(name, shape));
    return *params_.back();
  }

  bool contains(const std::string& name) const {
    return index_.count(name) != 0;
  }

  Parameter<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw std::out_of_range("ParamStore: no parameter named " + name);
    }
    return *params_[it->second];
  }
  const Parameter<T>& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  /// Total number of scalar parameters.
  std::size_t count() const {
    std::size_t total = 0;
    for (const auto& p : params_) total += p->value.numel();
    return total;
  }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform fan-in init with leaky-ReLU gain; `scale` multiplies the bound.
template <typename T>
void kaiming_uniform(Tensor4<T>& weight, std::mt19937_64& rng, double slope,
                     double scale = 1.0) {
  const double fan_in =
      static_cast<double>(weight.c()) * weight.h() * weight.w();
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  const double bound = scale * gain * std::sqrt(3.0 / fan_in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : weight.span()) v = static_cast<T>(dist(rng));
}

}  // namespace flowdeform
