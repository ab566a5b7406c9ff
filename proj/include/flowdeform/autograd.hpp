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

#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "flowdeform/params.hpp"
#include "flowdeform/tensor.hpp"

namespace flowdeform {

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor4<T>& value() const { return tape->value(id); }
  const Shape4& shape() const { return tape->value(id).shape(); }
  bool valid() const { return tape != nullptr; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
// insertion order is a topological order for the backward sweep. Each node's
// backward closure reads its own gradient and accumulates into its parents.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var<T> constant(Tensor4<T> value) {
    return push(std::move(value), false, nullptr);
  }

  /// Leaf whose gradient is kept after backward().
  Var<T> input(Tensor4<T> value) { return push(std::move(value), true, nullptr); }

  /// Leaf bound to a parameter; repeated calls reuse the same node so shared
  /// weights accumulate one gradient. backward() adds it into `p.grad`.
  Var<T> param(Parameter<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var<T>{this, it->second};
    Var<T> v = push(p.value, grad_enabled_, nullptr);
    param_nodes_.emplace(&p, v.id);
    bound_params_.push_back({&p, v.id});
    return v;
  }

  /// Records an operation result. The node requires a gradient iff any parent
  /// does; otherwise the closure is dropped.
  Var<T> record(Tensor4<T> value, std::initializer_list<Var<T>> parents,
                BackwardFn fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
  }
  Var<T> record(Tensor4<T> value, const std::vector<Var<T>>& parents,
                BackwardFn fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : nullptr);
  }

  const Tensor4<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Gradient buffer of node `id`, allocated as zeros on first access.
  Tensor4<T>& grad(std::size_t id) {
    auto& node = nodes_[id];
    if (node.grad.empty() && node.value.numel() != 0) {
      node.grad = Tensor4<T>(node.value.shape());
    }
    return node.grad;
  }
  const Tensor4<T>& grad(Var<T> v) { return grad(v.id); }

  /// Seeds d(root)/d(root) = 1 (root must hold a single element) and sweeps.
  void backward(Var<T> root) {
    if (root.value().numel() != 1) {
      throw std::invalid_argument("Tape::backward: root is not scalar, shape " +
                                  root.shape().str());
    }
    backward(root, Tensor4<T>(root.shape(), T(1)));
  }

  /// Sweeps with an explicit seed gradient for `root`.
  void backward(Var<T> root, const Tensor4<T>& seed) {
    require_same_shape(seed.shape(), root.shape(), "Tape::backward seed");
    auto& g = grad(root.id);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += seed[i];
    for (std::size_t id = root.id + 1; id-- > 0;) {
      auto& node = nodes_[id];
      if (!node.requires_grad || !node.backward || node.grad.empty()) continue;
      node.backward(*this, id);
    }
    for (const auto& [param, id] : bound_params_) {
      const auto& node = nodes_[id];
      if (node.grad.empty()) continue;
      for (std::size_t i = 0; i < node.grad.numel(); ++i) {
        param->grad[i] += node.grad[i];
      }
    }
  }

  /// Parameters bound after this call are recorded as constants.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor4<T> value;
    Tensor4<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Tensor4<T> value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(fn)});
    return Var<T>{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
  std::vector<std::pair<Parameter<T>*, std::size_t>> bound_params_;
  bool grad_enabled_ = true;
};

/// Adds `src` elementwise into `dst` (shapes must match).
template <typename T>
void accumulate(Tensor4<T>& dst, const Tensor4<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0, n = src.numel(); i < n; ++i) d[i] += s[i];
}

}  // namespace flowdeform
