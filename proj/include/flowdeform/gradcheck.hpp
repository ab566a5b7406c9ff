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

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowdeform/autograd.hpp"

namespace flowdeform {

// Central finite-difference checking of tape gradients, in double precision.
//
// The graph under test maps a list of input tensors to one output tensor. The
// checker contracts the output with fixed random weights r so the scalar
// objective is sum(r * out), then compares d/d(input) from the tape against
// (f(x + h e_i) - f(x - h e_i)) / 2h at sampled coordinates.
//
// Relative error at coordinate i is |a_i - n_i| / max(|a_i|, |n_i|, floor),
// with floor = floor_fraction * max_j |n_j| over the sampled coordinates of
// the same input. This keeps near-zero entries from dominating.

using GraphBuilder = std::function<Var<double>(Tape<double>&,
                                               const std::vector<Var<double>>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t samples_per_input = 48;
  double floor_fraction = 1e-3;
  std::uint64_t seed = 1234;
  /// Inputs at these positions are treated as constants (not checked).
  std::vector<std::size_t> skip_inputs;
};

struct GradCheckResult {
  std::string name;
  double worst_rel_error = 0.0;
  std::size_t checked = 0;
  /// Index of the input (or store parameter) holding the worst coordinate.
  std::size_t worst_input = 0;
};

GradCheckResult check_gradients(const std::string& name,
                                const std::vector<Tensor4<double>>& inputs,
                                const GraphBuilder& build,
                                const GradCheckOptions& opts = {});

using ScalarGraph = std::function<Var<double>(Tape<double>&)>;

/// Same comparison for d(loss)/d(parameter) over a random `fraction` of all
/// scalar entries in `store` (at least one). `loss` must bind parameters with
/// tape.param() and return a scalar. Gradients in the store are overwritten.
GradCheckResult check_param_gradients(const std::string& name, ParamStore<double>& store,
                                      const ScalarGraph& loss, double fraction,
                                      const GradCheckOptions& opts = {});

/// Fills `t` with uniform samples in [lo, hi).
void fill_uniform(Tensor4<double>& t, std::uint64_t seed, double lo, double hi);

/// Moves every sample at least `margin` away from the nearest integer. Used
/// for offsets and flows so bilinear kinks stay outside the FD stencil.
void push_off_integers(Tensor4<double>& t, double margin);

}  // namespace flowdeform
