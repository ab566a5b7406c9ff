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

#include <iosfwd>
#include <string>
#include <vector>

#include "flowdeform/tensor.hpp"

namespace flowdeform {

// Image quality metrics on [0, 1] images. Reported numbers crop
// kMetricBorder pixels on every side first.

inline constexpr int kMetricBorder = 4;
inline constexpr double kPsnrCap = 100.0;

/// BT.601 studio-range luma, (n, 3, h, w) -> (n, 1, h, w).
template <typename T>
Tensor4<T> rgb_to_y(const Tensor4<T>& rgb);

/// 10 log10(peak^2 / MSE) over all elements, capped at kPsnrCap.
template <typename T>
double psnr(const Tensor4<T>& pred, const Tensor4<T>& target, double peak = 1.0);

/// Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows, averaged over
/// channels and batch. Peak is 1.
template <typename T>
double ssim(const Tensor4<T>& pred, const Tensor4<T>& target);

template <typename T>
Tensor4<T> crop_border(const Tensor4<T>& x, int border);

struct FrameMetrics {
  std::string name;
  double psnr_rgb = 0, ssim_rgb = 0, psnr_y = 0, ssim_y = 0;
};

struct MetricReport {
  std::vector<FrameMetrics> frames;
  FrameMetrics mean() const;
  /// Columns name, psnr_rgb, ssim_rgb, psnr_y, ssim_y; last row is "mean".
  void write_csv(std::ostream& os) const;
};

/// All four numbers for one prediction, after the border crop and clamping
/// the prediction to [0, 1].
template <typename T>
FrameMetrics evaluate_frame(const std::string& name, const Tensor4<T>& pred,
                            const Tensor4<T>& target);

}  // namespace flowdeform
