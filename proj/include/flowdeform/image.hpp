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

#include <string>

#include "flowdeform/tensor.hpp"

namespace flowdeform {

/// Separable cubic convolution (a = -0.5) resize by an integer factor.
/// Output pixel o reads around (o + 0.5) / factor - 0.5; taps beyond the
/// border are clamped to the edge.
template <typename T>
Tensor4<T> bicubic_upsample(const Tensor4<T>& x, int factor);

/// Cubic convolution weight at distance d (a = -0.5).
double cubic_weight(double d);

/// Color-wheel rendering of a (1, 2, h, w) flow: hue follows the direction,
/// saturation the magnitude relative to `max_mag` (clamped at 1), value 1.
/// Zero flow is white.
template <typename T>
Tensor4<T> flow_to_color(const Tensor4<T>& flow, double max_mag);

/// 8-bit RGB or gray PNG -> (1, 3, h, w) in [0, 1]. Gray is replicated and
/// alpha is dropped.
Tensor4<float> read_png(const std::string& path);

/// (1, 1 or 3, h, w) in [0, 1] -> 8-bit PNG, values clamped and rounded.
template <typename T>
void write_png(const std::string& path, const Tensor4<T>& image);

/// Rounds to the nearest 1/255 step after clamping to [0, 1].
template <typename T>
Tensor4<T> quantize8(const Tensor4<T>& image);

}  // namespace flowdeform
