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
#include <cstdint>

namespace flowdeform::detail {

// The four integer neighbours of a sub-pixel position on an h x w plane.
// Out-of-range corners carry index -1 and read as zero.
template <typename T>
struct Corners {
  std::int32_t i00 = -1, i01 = -1, i10 = -1, i11 = -1;
  T fx = 0, fy = 0;

  static Corners at(T px, T py, int h, int w) {
    Corners c;
    if (!(px > T(-1) && py > T(-1) && px < T(w) && py < T(h))) {
      return c;  // fully outside: all corners invalid
    }
    const T x0f = std::floor(px);
    const T y0f = std::floor(py);
    const int x0 = static_cast<int>(x0f);
    const int y0 = static_cast<int>(y0f);
    c.fx = px - x0f;
    c.fy = py - y0f;
    const bool xl = x0 >= 0, xh = x0 + 1 < w;
    const bool yl = y0 >= 0, yh = y0 + 1 < h;
    if (yl && xl) c.i00 = y0 * w + x0;
    if (yl && xh) c.i01 = y0 * w + x0 + 1;
    if (yh && xl) c.i10 = (y0 + 1) * w + x0;
    if (yh && xh) c.i11 = (y0 + 1) * w + x0 + 1;
    return c;
  }

  bool any() const { return (i00 & i01 & i10 & i11) != -1; }

  T value(const T* plane) const {
    const T v00 = i00 >= 0 ? plane[i00] : T(0);
    const T v01 = i01 >= 0 ? plane[i01] : T(0);
    const T v10 = i10 >= 0 ? plane[i10] : T(0);
    const T v11 = i11 >= 0 ? plane[i11] : T(0);
    return (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) +
           fy * ((T(1) - fx) * v10 + fx * v11);
  }

  /// d(value)/d(px), d(value)/d(py); one-sided (floor) at integer positions.
  void position_grad(const T* plane, T& gx, T& gy) const {
    const T v00 = i00 >= 0 ? plane[i00] : T(0);
    const T v01 = i01 >= 0 ? plane[i01] : T(0);
    const T v10 = i10 >= 0 ? plane[i10] : T(0);
    const T v11 = i11 >= 0 ? plane[i11] : T(0);
    gx = (T(1) - fy) * (v01 - v00) + fy * (v11 - v10);
    gy = (T(1) - fx) * (v10 - v00) + fx * (v11 - v01);
  }

  /// Adds g times the bilinear weights into `plane`.
  void scatter(T* plane, T g) const {
    if (i00 >= 0) plane[i00] += g * (T(1) - fx) * (T(1) - fy);
    if (i01 >= 0) plane[i01] += g * fx * (T(1) - fy);
    if (i10 >= 0) plane[i10] += g * (T(1) - fx) * fy;
    if (i11 >= 0) plane[i11] += g * fx * fy;
  }
};

}  // namespace flowdeform::detail
