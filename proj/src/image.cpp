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

#include "flowdeform/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace flowdeform {

namespace {

constexpr double kCubicA = -0.5;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

// Per output index along one axis: first source index and 4 weights.
struct AxisTaps {
  std::vector<std::array<int, 4>> index;
  std::vector<std::array<double, 4>> weight;
};

AxisTaps axis_taps(int in, int factor) {
  const int out = in * factor;
  AxisTaps t;
  t.index.resize(out);
  t.weight.resize(out);
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) / factor - 0.5;
    const int i0 = static_cast<int>(std::floor(src));
    const double f = src - i0;
    for (int k = 0; k < 4; ++k) {
      t.index[o][k] = std::clamp(i0 - 1 + k, 0, in - 1);
      t.weight[o][k] = cubic_weight(f - (k - 1));
    }
  }
  return t;
}

// Hue in [0, 1) -> RGB on the fully saturated wheel.
void hue_rgb(double hue, double rgb[3]) {
  const double h6 = hue * 6.0;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double q = 1.0 - f;
  switch (sector) {
    case 0: rgb[0] = 1; rgb[1] = f; rgb[2] = 0; break;
    case 1: rgb[0] = q; rgb[1] = 1; rgb[2] = 0; break;
    case 2: rgb[0] = 0; rgb[1] = 1; rgb[2] = f; break;
    case 3: rgb[0] = 0; rgb[1] = q; rgb[2] = 1; break;
    case 4: rgb[0] = f; rgb[1] = 0; rgb[2] = 1; break;
    default: rgb[0] = 1; rgb[1] = 0; rgb[2] = q; break;
  }
}

}  // namespace

double cubic_weight(double d) {
  const double x = std::abs(d);
  if (x <= 1.0) return ((kCubicA + 2.0) * x - (kCubicA + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((kCubicA * x - 5.0 * kCubicA) * x + 8.0 * kCubicA) * x - 4.0 * kCubicA;
  return 0.0;
}

template <typename T>
Tensor4<T> bicubic_upsample(const Tensor4<T>& x, int factor) {
  if (factor < 1) throw std::invalid_argument("bicubic_upsample: factor must be >= 1");
  const int h = x.h(), w = x.w();
  const int ho = h * factor, wo = w * factor;
  const AxisTaps ty = axis_taps(h, factor), tx = axis_taps(w, factor);
  Tensor4<T> out(x.n(), x.c(), ho, wo);
  std::vector<double> rows(static_cast<std::size_t>(h) * wo);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      for (int y = 0; y < h; ++y)
        for (int o = 0; o < wo; ++o) {
          double acc = 0.0;
          for (int k = 0; k < 4; ++k) acc += tx.weight[o][k] * src[y * w + tx.index[o][k]];
          rows[static_cast<std::size_t>(y) * wo + o] = acc;
        }
      T* dst = out.plane(n, c);
      for (int o = 0; o < ho; ++o)
        for (int xx = 0; xx < wo; ++xx) {
          double acc = 0.0;
          for (int k = 0; k < 4; ++k)
            acc += ty.weight[o][k] * rows[static_cast<std::size_t>(ty.index[o][k]) * wo + xx];
          dst[static_cast<std::size_t>(o) * wo + xx] = static_cast<T>(acc);
        }
    }
  return out;
}

template <typename T>
Tensor4<T> flow_to_color(const Tensor4<T>& flow, double max_mag) {
  if (!(max_mag > 0.0)) throw std::invalid_argument("flow_to_color: max_mag must be > 0");
  if (flow.c() != 2) throw std::invalid_argument("flow_to_color: expected 2 channels");
  Tensor4<T> out(flow.n(), 3, flow.h(), flow.w());
  for (int n = 0; n < flow.n(); ++n)
    for (std::size_t i = 0; i < flow.shape().plane(); ++i) {
      const double fx = flow.plane(n, 0)[i], fy = flow.plane(n, 1)[i];
      const double sat = std::min(1.0, std::hypot(fx, fy) / max_mag);
      double hue = std::atan2(fy, fx) / (2.0 * M_PI);
      if (hue < 0.0) hue += 1.0;
      double rgb[3];
      hue_rgb(hue, rgb);
      for (int c = 0; c < 3; ++c)
        out.plane(n, c)[i] = static_cast<T>(1.0 - sat * (1.0 - rgb[c]));
    }
  return out;
}

Tensor4<float> read_png(const std::string& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("read_png: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("read_png: libpng init failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: decode error in " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor4<float> out(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out(0, c, y, x) = rows[y][3 * x + c] / 255.0f;
  return out;
}

template <typename T>
void write_png(const std::string& path, const Tensor4<T>& image) {
  if (image.n() != 1 || (image.c() != 1 && image.c() != 3))
    throw std::invalid_argument("write_png: expected (1, 1|3, h, w), got " + image.shape().str());
  const int h = image.h(), w = image.w(), ch = image.c();
  std::vector<png_byte> pixels(static_cast<std::size_t>(h) * w * ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        const double v = std::clamp(static_cast<double>(image(0, c, y, x)), 0.0, 1.0);
        pixels[(static_cast<std::size_t>(y) * w + x) * ch + c] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("write_png: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_png: libpng init failed");
  }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * w * ch;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: encode error for " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, w, h, 8, ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

template <typename T>
Tensor4<T> quantize8(const Tensor4<T>& image) {
  Tensor4<T> out(image.shape());
  for (std::size_t i = 0; i < image.numel(); ++i)
    out[i] = static_cast<T>(
        std::lround(std::clamp(static_cast<double>(image[i]), 0.0, 1.0) * 255.0) / 255.0);
  return out;
}

#define FLOWDEFORM_INSTANTIATE(T)                                        \
  template Tensor4<T> bicubic_upsample<T>(const Tensor4<T>&, int);       \
  template Tensor4<T> flow_to_color<T>(const Tensor4<T>&, double);       \
  template void write_png<T>(const std::string&, const Tensor4<T>&);     \
  template Tensor4<T> quantize8<T>(const Tensor4<T>&);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
