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

#include "flowdeform/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace flowdeform {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (i + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Pastes `patch` onto `dst` (both single-batch) with top-left at (y0, x0),
// clipped to the destination.
template <typename T>
void paste(Tensor4<T>& dst, const Tensor4<T>& patch, int y0, int x0) {
  for (int c = 0; c < dst.c(); ++c)
    for (int y = 0; y < patch.h(); ++y) {
      const int yy = y0 + y;
      if (yy < 0 || yy >= dst.h()) continue;
      for (int x = 0; x < patch.w(); ++x) {
        const int xx = x0 + x;
        if (xx < 0 || xx >= dst.w()) continue;
        dst(0, c, yy, xx) = patch(0, c, y, x);
      }
    }
}

constexpr int kMargin = 8;  // high-resolution context kept around each crop for the blur

}  // namespace

std::vector<double> gaussian_kernel(double sigma, int size) {
  require(sigma > 0.0 && size > 0 && size % 2 == 1,
          "gaussian_kernel: need sigma > 0 and an odd size");
  std::vector<double> k(size);
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

template <typename T>
Tensor4<T> gaussian_blur(const Tensor4<T>& x, double sigma, int size) {
  const auto k = gaussian_kernel(sigma, size);
  const int r = size / 2;
  const int h = x.h(), w = x.w();
  Tensor4<T> tmp(x.shape()), out(x.shape());
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* mid = tmp.plane(n, c);
      T* dst = out.plane(n, c);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (int t = -r; t <= r; ++t) acc += k[t + r] * src[y * w + reflect(xx + t, w)];
          mid[y * w + xx] = static_cast<T>(acc);
        }
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (int t = -r; t <= r; ++t) acc += k[t + r] * mid[reflect(y + t, h) * w + xx];
          dst[y * w + xx] = static_cast<T>(acc);
        }
    }
  return out;
}

template <typename T>
Tensor4<T> degrade(const Tensor4<T>& hr, int factor, double sigma, int size) {
  require(factor > 0 && hr.h() % factor == 0 && hr.w() % factor == 0,
          "degrade: " + hr.shape().str() + " is not divisible by " +
              std::to_string(factor));
  // Same arithmetic as gaussian_blur followed by decimation, evaluated only
  // at the kept rows and columns.
  const auto k = gaussian_kernel(sigma, size);
  const int r = size / 2;
  const int h = hr.h(), w = hr.w();
  Tensor4<T> lr(hr.n(), hr.c(), h / factor, w / factor);
  std::vector<T> mid(static_cast<std::size_t>(h) * lr.w());
  for (int n = 0; n < hr.n(); ++n)
    for (int c = 0; c < hr.c(); ++c) {
      const T* src = hr.plane(n, c);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < lr.w(); ++x) {
          double acc = 0.0;
          for (int t = -r; t <= r; ++t) acc += k[t + r] * src[y * w + reflect(x * factor + t, w)];
          mid[static_cast<std::size_t>(y) * lr.w() + x] = static_cast<T>(acc);
        }
      for (int y = 0; y < lr.h(); ++y)
        for (int x = 0; x < lr.w(); ++x) {
          double acc = 0.0;
          for (int t = -r; t <= r; ++t)
            acc += k[t + r] * mid[static_cast<std::size_t>(reflect(y * factor + t, h)) * lr.w() + x];
          lr(n, c, y, x) = static_cast<T>(acc);
        }
    }
  return lr;
}

template <typename T>
Tensor4<T> crop(const Tensor4<T>& x, int y0, int x0, int h, int w) {
  require(y0 >= 0 && x0 >= 0 && h >= 0 && w >= 0 && y0 + h <= x.h() && x0 + w <= x.w(),
          "crop: window out of range for " + x.shape().str());
  Tensor4<T> out(x.n(), x.c(), h, w);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < h; ++y)
        std::copy_n(x.plane(n, c) + static_cast<std::size_t>(y0 + y) * x.w() + x0, w,
                    out.plane(n, c) + static_cast<std::size_t>(y) * w);
  return out;
}

template <typename T>
Tensor4<T> make_texture(int h, int w, std::uint64_t seed, bool shapes) {
  require(h > 0 && w > 0, "make_texture: empty size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> img(3 * static_cast<std::size_t>(h) * w, 0.0);

  // Octaves of value noise; finer octaves keep substantial energy so the
  // high-resolution frames carry detail above the low-resolution band.
  const int cells[] = {48, 24, 12, 6, 3};
  const double amps[] = {1.0, 0.8, 0.65, 0.5, 0.35};
  for (int o = 0; o < 5; ++o) {
    const int cs = cells[o];
    const int gh = h / cs + 2, gw = w / cs + 2;
    std::vector<double> grid(3 * static_cast<std::size_t>(gh) * gw);
    for (std::size_t i = 0; i < grid.size() / 3; ++i) {
      const double luma = 2.0 * u(rng) - 1.0;
      for (int c = 0; c < 3; ++c)
        grid[c * gh * gw + i] = 0.7 * luma + 0.3 * (2.0 * u(rng) - 1.0);
    }
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y) {
        const int gy = y / cs;
        const double ty = smooth(static_cast<double>(y % cs) / cs);
        for (int x = 0; x < w; ++x) {
          const int gx = x / cs;
          const double tx = smooth(static_cast<double>(x % cs) / cs);
          const double* g = grid.data() + c * gh * gw;
          const double v = (1 - ty) * ((1 - tx) * g[gy * gw + gx] + tx * g[gy * gw + gx + 1]) +
                           ty * ((1 - tx) * g[(gy + 1) * gw + gx] + tx * g[(gy + 1) * gw + gx + 1]);
          img[(static_cast<std::size_t>(c) * h + y) * w + x] += amps[o] * v;
        }
      }
  }
  for (double& v : img) v = std::clamp(0.5 + 0.17 * v, 0.0, 1.0);

  const int count =
      shapes ? 6 + static_cast<int>(u(rng) * 8 * (static_cast<double>(h) * w) / (128.0 * 128.0)) : 0;
  for (int s = 0; s < count; ++s) {
    const double col[3] = {u(rng), u(rng), u(rng)};
    const double cy = u(rng) * h, cx = u(rng) * w;
    const double ry = 3.0 + u(rng) * 14.0, rx = 3.0 + u(rng) * 14.0;
    const bool disc = u(rng) < 0.5;
    for (int y = std::max(0, static_cast<int>(cy - ry)); y < std::min(h, static_cast<int>(cy + ry) + 1); ++y)
      for (int x = std::max(0, static_cast<int>(cx - rx)); x < std::min(w, static_cast<int>(cx + rx) + 1); ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img[(static_cast<std::size_t>(c) * h + y) * w + x] = col[c];
      }
  }
  Tensor4<T> out(1, 3, h, w);
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = static_cast<T>(img[i]);
  return out;
}

int canvas_size(const SynthSpec& spec) {
  const int t = spec.num_frames / 2;
  const int travel = t * static_cast<int>(std::ceil(spec.max_disp * spec.scale)) + 1;
  return spec.lr_size * spec.scale + 2 * kMargin + 2 * travel;
}

template <typename T>
std::vector<Tensor4<T>> make_texture_bank(int count, int size, std::uint64_t seed) {
  std::vector<Tensor4<T>> bank;
  bank.reserve(count);
  for (int i = 0; i < count; ++i) bank.push_back(make_texture<T>(size, size, mix_seed(seed, i)));
  return bank;
}

template <typename T>
SynthSample<T> synth_sequence(const Tensor4<T>& canvas, const SynthSpec& spec,
                              std::mt19937_64& rng) {
  require(spec.num_frames >= 1 && spec.num_frames % 2 == 1,
          "synth_sequence: frame count must be odd");
  require(spec.min_disp >= 0.0 && spec.max_disp >= spec.min_disp,
          "synth_sequence: need 0 <= min_disp <= max_disp");
  require(spec.max_disp < spec.lr_size,
          "synth_sequence: displacement exceeds the patch size");
  require(canvas.h() >= canvas_size(spec) && canvas.w() >= canvas_size(spec),
          "synth_sequence: canvas " + canvas.shape().str() + " smaller than " +
              std::to_string(canvas_size(spec)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int t = spec.num_frames / 2;
  const int s = spec.scale;
  const int H = spec.lr_size * s;
  const int full = H + 2 * kMargin;

  auto draw_velocity = [&](int& vx, int& vy, std::optional<double> fixed) {
    const double mag = spec.min_disp + (spec.max_disp - spec.min_disp) * u(rng);
    const double drawn = 2.0 * M_PI * u(rng);
    const double ang = fixed ? *fixed : drawn;
    vx = static_cast<int>(std::lround(mag * std::cos(ang) * s));
    vy = static_cast<int>(std::lround(mag * std::sin(ang) * s));
  };
  int vx, vy;
  draw_velocity(vx, vy, spec.direction);
  const int max_travel = t * static_cast<int>(std::ceil(spec.max_disp * s)) + 1;
  auto pick = [&](int extent) {
    const int lo = max_travel, hi = extent - full - max_travel;
    return lo + static_cast<int>(u(rng) * (hi - lo + 1));
  };
  const int by = pick(canvas.h()), bx = pick(canvas.w());

  struct Object {
    Tensor4<T> patch;
    int qy, qx;  // top-left in reference-frame crop coordinates
    int uy, ux;  // high-resolution pixels per frame
  };
  std::vector<Object> objects;
  if (spec.motion == MotionModel::kObjects) {
    for (int k = 0; k < spec.objects; ++k) {
      const int side = H / 6 + static_cast<int>(u(rng) * (H / 6));
      const int sy = static_cast<int>(u(rng) * (canvas.h() - side));
      const int sx = static_cast<int>(u(rng) * (canvas.w() - side));
      Object o{crop(canvas, sy, sx, side, side), static_cast<int>(u(rng) * (H - side)),
               static_cast<int>(u(rng) * (H - side)), 0, 0};
      draw_velocity(o.ux, o.uy, std::nullopt);
      objects.push_back(std::move(o));
    }
  }

  // Augmentation acts on the high-resolution frames before degradation so the
  // sampling phase of the low-resolution grid stays tied to the target.
  Dihedral d;
  if (spec.augment) d = Dihedral{u(rng) < 0.5, u(rng) < 0.5, u(rng) < 0.5};

  SynthSample<T> out;
  out.reference_index = t;
  out.augmentation = d;
  for (int i = 0; i < spec.num_frames; ++i) {
    Tensor4<T> frame = crop(canvas, by + (i - t) * vy, bx + (i - t) * vx, full, full);
    for (const auto& o : objects)
      paste(frame, o.patch, kMargin + o.qy - (i - t) * o.uy, kMargin + o.qx - (i - t) * o.ux);
    frame = apply_dihedral(frame, d, false);
    if (i == t) out.hr_reference = crop(frame, kMargin, kMargin, H, H);
    out.lr_frames.push_back(
        crop(degrade(frame, s), kMargin / s, kMargin / s, spec.lr_size, spec.lr_size));

    // Flow in high-resolution pixels over the reference crop, read back at
    // the low-resolution sampling positions.
    Tensor4<T> hr_flow(1, 2, H, H);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < H; ++x) {
        int fx = (t - i) * vx, fy = (t - i) * vy;
        for (const auto& o : objects) {
          const int hy = y - o.qy, hx = x - o.qx;
          if (hy >= 0 && hx >= 0 && hy < o.patch.h() && hx < o.patch.w()) {
            fx = (t - i) * o.ux;
            fy = (t - i) * o.uy;
          }
        }
        hr_flow(0, 0, y, x) = static_cast<T>(fx);
        hr_flow(0, 1, y, x) = static_cast<T>(fy);
      }
    hr_flow = apply_dihedral(hr_flow, d, true);
    Tensor4<T> flow(1, 2, spec.lr_size, spec.lr_size);
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < spec.lr_size; ++y)
        for (int x = 0; x < spec.lr_size; ++x)
          flow(0, c, y, x) = static_cast<T>(static_cast<double>(hr_flow(0, c, y * s, x * s)) / s);
    out.lr_flows.push_back(std::move(flow));
  }
  return out;
}

template <typename T>
Tensor4<T> apply_dihedral(const Tensor4<T>& x, const Dihedral& d, bool is_flow) {
  require(!is_flow || x.c() == 2, "apply_dihedral: flow must have 2 channels");
  require(!d.transpose || x.h() == x.w(), "apply_dihedral: transpose needs a square map");
  Tensor4<T> out(x.shape());
  const int h = x.h(), w = x.w();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c) {
      const int src_c = is_flow && d.transpose ? 1 - c : c;
      T sign = T(1);
      if (is_flow && ((c == 0 && d.flip_x) || (c == 1 && d.flip_y))) sign = T(-1);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          int sy = d.flip_y ? h - 1 - y : y;
          int sx = d.flip_x ? w - 1 - xx : xx;
          if (d.transpose) std::swap(sy, sx);
          out(n, c, y, xx) = sign * x(n, src_c, sy, sx);
        }
    }
  return out;
}

#define FLOWDEFORM_INSTANTIATE(T)                                                  \
  template Tensor4<T> gaussian_blur<T>(const Tensor4<T>&, double, int);            \
  template Tensor4<T> degrade<T>(const Tensor4<T>&, int, double, int);             \
  template Tensor4<T> crop<T>(const Tensor4<T>&, int, int, int, int);              \
  template Tensor4<T> make_texture<T>(int, int, std::uint64_t, bool);                  \
  template std::vector<Tensor4<T>> make_texture_bank<T>(int, int, std::uint64_t);  \
  template SynthSample<T> synth_sequence<T>(const Tensor4<T>&, const SynthSpec&,   \
                                            std::mt19937_64&);                     \
  template Tensor4<T> apply_dihedral<T>(const Tensor4<T>&, const Dihedral&, bool);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
