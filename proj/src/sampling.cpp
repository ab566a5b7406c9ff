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

#include "flowdeform/sampling.hpp"

#include <string>
#include <vector>

#include "bilinear.hpp"

namespace flowdeform {

namespace {

// Shared kernel. With `relative`, the read position is the output pixel plus
// (base_dx, base_dy) plus the field; otherwise the field is the position.
template <typename T>
Var<T> resample(Var<T> input, Var<T> field, bool relative, T base_dx,
                T base_dy) {
  if (!input.valid() || !field.valid()) {
    throw std::invalid_argument("resample: invalid Var");
  }
  auto& tape = *input.tape;
  const Shape4 xs = input.shape();
  const Shape4 fs = field.shape();
  if (fs.c != 2 || fs.n != xs.n) {
    throw std::invalid_argument("sampling: field " + fs.str() +
                                " is not a 2-channel map for input " + xs.str());
  }
  if (relative && !fs.same_spatial(xs)) {
    throw std::invalid_argument("warp: flow " + fs.str() +
                                " does not match input " + xs.str());
  }
  const int ho = fs.h;
  const int wo = fs.w;
  const std::size_t out_plane = fs.plane();

  auto corners_for = [=](const Tensor4<T>& f, int b) {
    std::vector<detail::Corners<T>> cs(out_plane);
    const T* fx = f.plane(b, 0);
    const T* fy = f.plane(b, 1);
    for (int y = 0; y < ho; ++y) {
      for (int x = 0; x < wo; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * wo + x;
        T px = fx[i];
        T py = fy[i];
        if (relative) {
          px += static_cast<T>(x) + base_dx;
          py += static_cast<T>(y) + base_dy;
        }
        cs[i] = detail::Corners<T>::at(px, py, xs.h, xs.w);
      }
    }
    return cs;
  };

  const auto& xv = input.value();
  Tensor4<T> out(xs.n, xs.c, ho, wo);
  for (int b = 0; b < xs.n; ++b) {
    const auto cs = corners_for(field.value(), b);
    for (int c = 0; c < xs.c; ++c) {
      const T* src = xv.plane(b, c);
      T* dst = out.plane(b, c);
      for (std::size_t i = 0; i < out_plane; ++i) dst[i] = cs[i].value(src);
    }
  }

  return tape.record(
      std::move(out), {input, field},
      [input, field, corners_for, out_plane](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& xv = t.value(input.id);
        const bool need_x = t.requires_grad(input.id);
        const bool need_f = t.requires_grad(field.id);
        for (int b = 0; b < xv.n(); ++b) {
          const auto cs = corners_for(t.value(field.id), b);
          T* gfx = need_f ? t.grad(field.id).plane(b, 0) : nullptr;
          T* gfy = need_f ? t.grad(field.id).plane(b, 1) : nullptr;
          for (int c = 0; c < xv.c(); ++c) {
            const T* g = dy.plane(b, c);
            const T* src = xv.plane(b, c);
            T* dx = need_x ? t.grad(input.id).plane(b, c) : nullptr;
            for (std::size_t i = 0; i < out_plane; ++i) {
              if (!cs[i].any()) continue;
              if (need_x) cs[i].scatter(dx, g[i]);
              if (need_f) {
                T gx, gy;
                cs[i].position_grad(src, gx, gy);
                gfx[i] += g[i] * gx;
                gfy[i] += g[i] * gy;
              }
            }
          }
        }
      });
}

}  // namespace

template <typename T>
Var<T> bilinear_sample(Var<T> input, Var<T> coords) {
  return resample(input, coords, false, T(0), T(0));
}

template <typename T>
Var<T> warp(Var<T> input, Var<T> flow) {
  return resample(input, flow, true, T(0), T(0));
}

template <typename T>
Var<T> sample_displaced(Var<T> input, Var<T> disp, T base_dx, T base_dy) {
  return resample(input, disp, true, base_dx, base_dy);
}

#define FLOWDEFORM_INSTANTIATE(T)                          \
  template Var<T> bilinear_sample<T>(Var<T>, Var<T>);      \
  template Var<T> warp<T>(Var<T>, Var<T>);                 \
  template Var<T> sample_displaced<T>(Var<T>, Var<T>, T, T);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
