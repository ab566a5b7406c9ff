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

#include "flowdeform/autograd.hpp"

namespace flowdeform {

// Flow fields are (n, 2, h, w) tensors: channel 0 is dx, channel 1 is dy, in
// pixels. A flow value at p points from the reference location p into the
// frame being read, so warp(x, f)(p) = x(p + f(p)) (backward warping).
// Reads outside the plane are zero.

/// Bilinear read of `input` at absolute positions. `coords` is (n, 2, ho, wo)
/// holding (x, y); output is (n, c, ho, wo). Differentiable in both.
template <typename T>
Var<T> bilinear_sample(Var<T> input, Var<T> coords);

/// Backward warp: out(p) = input(p + flow(p)).
template <typename T>
Var<T> warp(Var<T> input, Var<T> flow);

/// Reads `input` at p + (base_dx, base_dy) + disp(p). warp() is the case
/// base = (0, 0).
template <typename T>
Var<T> sample_displaced(Var<T> input, Var<T> disp, T base_dx, T base_dy);

}  // namespace flowdeform
