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
#include <iosfwd>
#include <string>

#include "flowdeform/tensor.hpp"

namespace flowdeform {

// Binary layout, little-endian:
//   "FDT4" | u8 dtype (0 = f64, 1 = f32) | u64 n | u64 c | u64 h | u64 w |
//   n*c*h*w samples, row-major.
enum class DType : std::uint8_t { kFloat64 = 0, kFloat32 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<double>() { return DType::kFloat64; }
template <>
constexpr DType dtype_of<float>() { return DType::kFloat32; }

/// Writes `t` in its native precision.
template <typename T>
void write_tensor(std::ostream& os, const Tensor4<T>& t);
template <typename T>
void save_tensor(const std::string& path, const Tensor4<T>& t);

/// Reads a tensor stored in either precision and converts to T.
template <typename T>
Tensor4<T> read_tensor(std::istream& is);
template <typename T>
Tensor4<T> load_tensor(const std::string& path);

}  // namespace flowdeform
