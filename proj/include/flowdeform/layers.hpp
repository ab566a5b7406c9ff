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

#include <random>
#include <string>

#include "flowdeform/ops.hpp"

namespace flowdeform {

enum class Init { kKaiming, kZero };

/// Registers `<prefix>.weight` (c_out, c_in, k, k) and `<prefix>.bias`.
/// Biases start at zero; `gain` scales the Kaiming bound.
template <typename T>
void add_conv(ParamStore<T>& store, const std::string& prefix, int c_in,
              int c_out, int k, std::mt19937_64& rng, double slope,
              Init init = Init::kKaiming, double gain = 1.0) {
  auto& w = store.add(prefix + ".weight", Shape4{c_out, c_in, k, k});
  store.add(prefix + ".bias", Shape4{1, c_out, 1, 1});
  if (init == Init::kKaiming) kaiming_uniform(w.value, rng, slope, gain);
}

/// Applies the convolution registered under `prefix` ("same" padding).
template <typename T>
Var<T> conv(Tape<T>& tape, ParamStore<T>& store, const std::string& prefix,
            Var<T> x, int stride = 1) {
  auto& w = store.at(prefix + ".weight");
  const int pad = w.value.h() / 2;
  return conv2d(x, tape.param(w), tape.param(store.at(prefix + ".bias")),
                stride, pad);
}

}  // namespace flowdeform
