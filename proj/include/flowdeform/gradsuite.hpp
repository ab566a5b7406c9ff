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
#include <string>
#include <vector>

namespace flowdeform {

struct GradSuiteEntry {
  std::string name;
  double worst_rel_error = 0.0;
  double tolerance = 0.0;
  std::size_t checked = 0;
  bool pass() const { return worst_rel_error < tolerance; }
};

/// Finite-difference check of every differentiable op plus a sampled
/// end-to-end check of a tiny network, all in double precision. Inputs are
/// drawn from `seed` and kept clear of bilinear, activation and L1 kinks.
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 1);

}  // namespace flowdeform
