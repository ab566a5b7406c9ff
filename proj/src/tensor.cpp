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

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "flowdeform/tensor.hpp"
#include "flowdeform/tensor_io.hpp"

namespace flowdeform {

void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.str() + " vs " + b.str());
  }
}

template <typename T>
bool all_finite(const Tensor4<T>& t) {
  for (T v : t.span()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <typename T>
T max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  T worst = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst;
}

namespace {

constexpr std::array<char, 4> kMagic = {'F', 'D', 'T', '4'};

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b.data()), 8);
}

std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  is.read(reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

template <typename S>
void put_samples(std::ostream& os, const S* p, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(p),
             static_cast<std::streamsize>(count * sizeof(S)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::array<char, sizeof(S)> b{};
      std::memcpy(b.data(), p + i, sizeof(S));
      std::reverse(b.begin(), b.end());
      os.write(b.data(), sizeof(S));
    }
  }
}

template <typename S>
std::vector<S> get_samples(std::istream& is, std::size_t count) {
  std::vector<S> out(count);
  is.read(reinterpret_cast<char*>(out.data()),
          static_cast<std::streamsize>(count * sizeof(S)));
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : out) {
      std::array<char, sizeof(S)> b{};
      std::memcpy(b.data(), &v, sizeof(S));
      std::reverse(b.begin(), b.end());
      std::memcpy(&v, b.data(), sizeof(S));
    }
  }
  return out;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor4<T>& t) {
  os.write(kMagic.data(), 4);
  const auto code = static_cast<char>(dtype_of<T>());
  os.write(&code, 1);
  put_u64(os, static_cast<std::uint64_t>(t.n()));
  put_u64(os, static_cast<std::uint64_t>(t.c()));
  put_u64(os, static_cast<std::uint64_t>(t.h()));
  put_u64(os, static_cast<std::uint64_t>(t.w()));
  put_samples(os, t.data(), t.numel());
  if (!os) throw std::runtime_error("write_tensor: stream error");
}

template <typename T>
Tensor4<T> read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  if (!is || magic != kMagic) {
    throw std::runtime_error("read_tensor: missing FDT4 magic");
  }
  char code = 0;
  is.read(&code, 1);
  Shape4 s;
  std::array<std::uint64_t, 4> dims{};
  for (auto& d : dims) {
    d = get_u64(is);
    if (d > static_cast<std::uint64_t>(1) << 31) {
      throw std::runtime_error("read_tensor: implausible extent");
    }
  }
  s = Shape4{static_cast<int>(dims[0]), static_cast<int>(dims[1]),
             static_cast<int>(dims[2]), static_cast<int>(dims[3])};
  std::vector<T> data;
  switch (static_cast<DType>(code)) {
    case DType::kFloat64: {
      auto raw = get_samples<double>(is, s.numel());
      data.assign(raw.begin(), raw.end());
      break;
    }
    case DType::kFloat32: {
      auto raw = get_samples<float>(is, s.numel());
      data.assign(raw.begin(), raw.end());
      break;
    }
    default:
      throw std::runtime_error("read_tensor: unknown dtype code " +
                               std::to_string(static_cast<int>(code)));
  }
  if (!is) throw std::runtime_error("read_tensor: truncated sample data");
  return Tensor4<T>(s, std::move(data));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor4<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_tensor: cannot open " + path);
  write_tensor(os, t);
}

template <typename T>
Tensor4<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_tensor: cannot open " + path);
  return read_tensor<T>(is);
}

#define FLOWDEFORM_INSTANTIATE(T)                                     \
  template bool all_finite<T>(const Tensor4<T>&);                     \
  template T max_abs_diff<T>(const Tensor4<T>&, const Tensor4<T>&);   \
  template void write_tensor<T>(std::ostream&, const Tensor4<T>&);    \
  template Tensor4<T> read_tensor<T>(std::istream&);                  \
  template void save_tensor<T>(const std::string&, const Tensor4<T>&); \
  template Tensor4<T> load_tensor<T>(const std::string&);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
