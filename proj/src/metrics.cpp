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

#include "flowdeform/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace flowdeform {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> window_taps() {
  std::vector<double> g(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid-mode separable filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& x, int h, int w,
                                 const std::vector<double>& g) {
  const int ho = h - kWindow + 1, wo = w - kWindow + 1;
  std::vector<double> mid(static_cast<std::size_t>(h) * wo), out(static_cast<std::size_t>(ho) * wo);
  for (int y = 0; y < h; ++y)
    for (int xx = 0; xx < wo; ++xx) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * x[static_cast<std::size_t>(y) * w + xx + k];
      mid[static_cast<std::size_t>(y) * wo + xx] = acc;
    }
  for (int y = 0; y < ho; ++y)
    for (int xx = 0; xx < wo; ++xx) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * mid[static_cast<std::size_t>(y + k) * wo + xx];
      out[static_cast<std::size_t>(y) * wo + xx] = acc;
    }
  return out;
}

template <typename T>
void require_same(const Tensor4<T>& a, const Tensor4<T>& b, const char* what) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(what) + ": shape " + a.shape().str() +
                                " vs " + b.shape().str());
}

}  // namespace

template <typename T>
Tensor4<T> rgb_to_y(const Tensor4<T>& rgb) {
  if (rgb.c() != 3) throw std::invalid_argument("rgb_to_y: expected 3 channels, got " + rgb.shape().str());
  Tensor4<T> y(rgb.n(), 1, rgb.h(), rgb.w());
  for (int n = 0; n < rgb.n(); ++n)
    for (std::size_t i = 0; i < rgb.shape().plane(); ++i)
      y.plane(n, 0)[i] = static_cast<T>((65.481 * rgb.plane(n, 0)[i] + 128.553 * rgb.plane(n, 1)[i] +
                                         24.966 * rgb.plane(n, 2)[i] + 16.0) /
                                        255.0);
  return y;
}

template <typename T>
double psnr(const Tensor4<T>& pred, const Tensor4<T>& target, double peak) {
  require_same(pred, target, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.numel());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

template <typename T>
double ssim(const Tensor4<T>& pred, const Tensor4<T>& target) {
  require_same(pred, target, "ssim");
  const int h = pred.h(), w = pred.w();
  if (h < kWindow || w < kWindow)
    throw std::invalid_argument("ssim: image " + pred.shape().str() + " smaller than the window");
  const auto g = window_taps();
  const std::size_t plane = pred.shape().plane();
  std::vector<double> a(plane), b(plane), aa(plane), bb(plane), ab(plane);
  double total = 0.0;
  std::size_t count = 0;
  for (int n = 0; n < pred.n(); ++n)
    for (int c = 0; c < pred.c(); ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        a[i] = pred.plane(n, c)[i];
        b[i] = target.plane(n, c)[i];
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
      }
      const auto ma = filter_valid(a, h, w, g), mb = filter_valid(b, h, w, g);
      const auto saa = filter_valid(aa, h, w, g), sbb = filter_valid(bb, h, w, g);
      const auto sab = filter_valid(ab, h, w, g);
      for (std::size_t i = 0; i < ma.size(); ++i) {
        const double va = saa[i] - ma[i] * ma[i], vb = sbb[i] - mb[i] * mb[i];
        const double cov = sab[i] - ma[i] * mb[i];
        total += ((2 * ma[i] * mb[i] + kC1) * (2 * cov + kC2)) /
                 ((ma[i] * ma[i] + mb[i] * mb[i] + kC1) * (va + vb + kC2));
        ++count;
      }
    }
  return total / static_cast<double>(count);
}

template <typename T>
Tensor4<T> crop_border(const Tensor4<T>& x, int border) {
  if (border < 0 || 2 * border >= x.h() || 2 * border >= x.w())
    throw std::invalid_argument("crop_border: border too large for " + x.shape().str());
  Tensor4<T> out(x.n(), x.c(), x.h() - 2 * border, x.w() - 2 * border);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int xx = 0; xx < out.w(); ++xx) out(n, c, y, xx) = x(n, c, y + border, xx + border);
  return out;
}

template <typename T>
FrameMetrics evaluate_frame(const std::string& name, const Tensor4<T>& pred,
                            const Tensor4<T>& target) {
  require_same(pred, target, "evaluate_frame");
  Tensor4<T> p = crop_border(pred, kMetricBorder);
  for (auto& v : p.span()) v = std::clamp(v, T(0), T(1));
  const Tensor4<T> t = crop_border(target, kMetricBorder);
  FrameMetrics m;
  m.name = name;
  m.psnr_rgb = psnr(p, t);
  m.ssim_rgb = ssim(p, t);
  const auto py = rgb_to_y(p), ty = rgb_to_y(t);
  m.psnr_y = psnr(py, ty);
  m.ssim_y = ssim(py, ty);
  return m;
}

FrameMetrics MetricReport::mean() const {
  FrameMetrics m;
  m.name = "mean";
  if (frames.empty()) return m;
  for (const auto& f : frames) {
    m.psnr_rgb += f.psnr_rgb;
    m.ssim_rgb += f.ssim_rgb;
    m.psnr_y += f.psnr_y;
    m.ssim_y += f.ssim_y;
  }
  const double k = static_cast<double>(frames.size());
  m.psnr_rgb /= k;
  m.ssim_rgb /= k;
  m.psnr_y /= k;
  m.ssim_y /= k;
  return m;
}

void MetricReport::write_csv(std::ostream& os) const {
  os << "name,psnr_rgb,ssim_rgb,psnr_y,ssim_y\n" << std::setprecision(10);
  auto row = [&os](const FrameMetrics& f) {
    os << f.name << ',' << f.psnr_rgb << ',' << f.ssim_rgb << ',' << f.psnr_y << ',' << f.ssim_y
       << '\n';
  };
  for (const auto& f : frames) row(f);
  row(mean());
}

#define FLOWDEFORM_INSTANTIATE(T)                                                   \
  template Tensor4<T> rgb_to_y<T>(const Tensor4<T>&);                               \
  template double psnr<T>(const Tensor4<T>&, const Tensor4<T>&, double);            \
  template double ssim<T>(const Tensor4<T>&, const Tensor4<T>&);                    \
  template Tensor4<T> crop_border<T>(const Tensor4<T>&, int);                       \
  template FrameMetrics evaluate_frame<T>(const std::string&, const Tensor4<T>&,    \
                                          const Tensor4<T>&);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
