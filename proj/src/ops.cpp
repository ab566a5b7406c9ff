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

#include "flowdeform/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>

namespace flowdeform {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Tape<T>& tape_of(Var<T> v) {
  if (!v.valid()) throw std::invalid_argument("op called on an invalid Var");
  return *v.tape;
}

struct ConvGeom {
  int c_in, h, w, k, stride, pad, h_out, w_out;
  int rows() const { return c_in * k * k; }
  int cols() const { return h_out * w_out; }
};

template <typename T>
void im2col(const T* in, const ConvGeom& g, T* col) {
  const int kk = g.k * g.k;
  for (int c = 0; c < g.c_in; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* row = col + (static_cast<std::size_t>(c) * kk + ky * g.k + kx) *
                           g.cols();
        for (int oy = 0; oy < g.h_out; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.w_out;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.w_out, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          if (g.stride == 1) {
            const int shift = kx - g.pad;
            const int lo = std::min(std::max(0, -shift), g.w_out);
            const int hi = std::max(lo, std::min(g.w_out, g.w - shift));
            std::fill(dst, dst + lo, T(0));
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox + shift];
            std::fill(dst + hi, dst + g.w_out, T(0));
          } else {
            for (int ox = 0; ox < g.w_out; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeom& g, T* in_grad) {
  const int kk = g.k * g.k;
  for (int c = 0; c < g.c_in; ++c) {
    T* plane = in_grad + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* row = col + (static_cast<std::size_t>(c) * kk + ky * g.k + kx) *
                                 g.cols();
        for (int oy = 0; oy < g.h_out; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.w_out;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.w_out; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, int stride,
              int padding) {
  auto& tape = tape_of(input);
  const Shape4 xs = input.shape();
  const Shape4 ws = weight.shape();
  require(ws.h == ws.w && ws.h % 2 == 1,
          "conv2d: kernel must be square and odd, got weight " + ws.str());
  require(padding >= 0 && stride >= 1, "conv2d: invalid stride/padding");
  require(xs.c == ws.c, "conv2d: input " + xs.str() +
                            " does not match weight " + ws.str());
  const bool has_bias = bias.valid();
  if (has_bias) {
    require(bias.shape() == Shape4{1, ws.n, 1, 1},
            "conv2d: bias " + bias.shape().str() + " does not match weight " +
                ws.str());
  }
  ConvGeom g{xs.c, xs.h, xs.w, ws.h, stride, padding, 0, 0};
  g.h_out = (xs.h + 2 * padding - ws.h) / stride + 1;
  g.w_out = (xs.w + 2 * padding - ws.w) / stride + 1;
  require(g.h_out > 0 && g.w_out > 0,
          "conv2d: input " + xs.str() + " too small for weight " + ws.str());
  const int c_out = ws.n;

  Tensor4<T> out(xs.n, c_out, g.h_out, g.w_out);
  const bool direct = ws.h == 1 && stride == 1 && padding == 0;
  AlignedVector<T> col(direct ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());
  const auto& x = input.value();
  const auto& wv = weight.value();
  Eigen::Map<const MatR<T>> W(wv.data(), c_out, g.rows());
  for (int b = 0; b < xs.n; ++b) {
    const T* src = x.plane(b, 0);
    if (!direct) {
      im2col(src, g, col.data());
      src = col.data();
    }
    Eigen::Map<const MatR<T>> C(src, g.rows(), g.cols());
    Eigen::Map<MatR<T>> Y(out.plane(b, 0), c_out, g.cols());
    Y.noalias() = W * C;
    if (has_bias) {
      const auto& bv = bias.value();
      for (int o = 0; o < c_out; ++o) Y.row(o).array() += bv[o];
    }
  }

  std::vector<Var<T>> parents{input, weight};
  if (has_bias) parents.push_back(bias);
  return tape.record(
      std::move(out), parents,
      [input, weight, bias, has_bias, g, c_out, direct](Tape<T>& t,
                                                        std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& x = t.value(input.id);
        const auto& wv = t.value(weight.id);
        const int n = x.n();
        Eigen::Map<const MatR<T>> W(wv.data(), c_out, g.rows());
        const bool need_x = t.requires_grad(input.id);
        const bool need_w = t.requires_grad(weight.id);
        AlignedVector<T> col(direct ? 0
                                  : static_cast<std::size_t>(g.rows()) * g.cols());
        AlignedVector<T> dcol(static_cast<std::size_t>(g.rows()) * g.cols());
        for (int b = 0; b < n; ++b) {
          Eigen::Map<const MatR<T>> DY(dy.plane(b, 0), c_out, g.cols());
          if (need_w) {
            const T* src = x.plane(b, 0);
            if (!direct) {
              im2col(src, g, col.data());
              src = col.data();
            }
            Eigen::Map<const MatR<T>> C(src, g.rows(), g.cols());
            Eigen::Map<MatR<T>> DW(t.grad(weight.id).data(), c_out, g.rows());
            DW.noalias() += DY * C.transpose();
          }
          if (need_x) {
            auto& dx = t.grad(input.id);
            if (direct) {
              Eigen::Map<MatR<T>> DX(dx.plane(b, 0), g.rows(), g.cols());
              DX.noalias() += W.transpose() * DY;
            } else {
              Eigen::Map<MatR<T>> DC(dcol.data(), g.rows(), g.cols());
              DC.noalias() = W.transpose() * DY;
              col2im(dcol.data(), g, dx.plane(b, 0));
            }
          }
          if (has_bias && t.requires_grad(bias.id)) {
            auto& db = t.grad(bias.id);
            for (int o = 0; o < c_out; ++o) db[o] += DY.row(o).sum();
          }
        }
      });
}

template <typename T>
Var<T> leaky_relu(Var<T> input, T slope) {
  auto& tape = tape_of(input);
  const auto& x = input.value();
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out[i] = x[i] >= T(0) ? x[i] : slope * x[i];
  }
  return tape.record(std::move(out), {input},
                     [input, slope](Tape<T>& t, std::size_t self) {
                       const auto& dy = t.grad(self);
                       const auto& x = t.value(input.id);
                       auto& dx = t.grad(input.id);
                       for (std::size_t i = 0; i < x.numel(); ++i) {
                         dx[i] += x[i] >= T(0) ? dy[i] : slope * dy[i];
                       }
                     });
}

template <typename T>
Var<T> sigmoid(Var<T> input) {
  auto& tape = tape_of(input);
  const auto& x = input.value();
  Tensor4<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out[i] = T(1) / (T(1) + std::exp(-x[i]));
  }
  return tape.record(std::move(out), {input},
                     [input](Tape<T>& t, std::size_t self) {
                       const auto& dy = t.grad(self);
                       const auto& y = t.value(self);
                       auto& dx = t.grad(input.id);
                       for (std::size_t i = 0; i < y.numel(); ++i) {
                         dx[i] += dy[i] * y[i] * (T(1) - y[i]);
                       }
                     });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs) {
  require(!inputs.empty(), "concat_channels: empty input list");
  auto& tape = tape_of(inputs.front());
  const Shape4 first = inputs.front().shape();
  int total = 0;
  for (const auto& v : inputs) {
    const Shape4 s = v.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            "concat_channels: spatial mismatch " + first.str() + " vs " +
                s.str());
    total += s.c;
  }
  if (inputs.size() == 1) return inputs.front();
  Tensor4<T> out(first.n, total, first.h, first.w);
  const std::size_t plane = first.plane();
  for (int b = 0; b < first.n; ++b) {
    int c0 = 0;
    for (const auto& v : inputs) {
      const auto& x = v.value();
      std::copy_n(x.plane(b, 0), plane * x.c(), out.plane(b, c0));
      c0 += x.c();
    }
  }
  return tape.record(std::move(out), inputs,
                     [inputs, plane](Tape<T>& t, std::size_t self) {
                       const auto& dy = t.grad(self);
                       for (int b = 0; b < dy.n(); ++b) {
                         int c0 = 0;
                         for (const auto& v : inputs) {
                           const int c = t.value(v.id).c();
                           if (t.requires_grad(v.id)) {
                             auto& dx = t.grad(v.id);
                             const T* src = dy.plane(b, c0);
                             T* dst = dx.plane(b, 0);
                             for (std::size_t i = 0; i < plane * c; ++i) {
                               dst[i] += src[i];
                             }
                           }
                           c0 += c;
                         }
                       }
                     });
}

template <typename T>
Var<T> slice_channels(Var<T> input, int begin, int count) {
  auto& tape = tape_of(input);
  const Shape4 s = input.shape();
  require(begin >= 0 && count > 0 && begin + count <= s.c,
          "slice_channels: range [" + std::to_string(begin) + ", " +
              std::to_string(begin + count) + ") outside " + s.str());
  const auto& x = input.value();
  Tensor4<T> out(s.n, count, s.h, s.w);
  const std::size_t plane = s.plane();
  for (int b = 0; b < s.n; ++b) {
    std::copy_n(x.plane(b, begin), plane * count, out.plane(b, 0));
  }
  return tape.record(std::move(out), {input},
                     [input, begin, count, plane](Tape<T>& t, std::size_t self) {
                       const auto& dy = t.grad(self);
                       auto& dx = t.grad(input.id);
                       for (int b = 0; b < dy.n(); ++b) {
                         const T* src = dy.plane(b, 0);
                         T* dst = dx.plane(b, begin);
                         for (std::size_t i = 0; i < plane * count; ++i) {
                           dst[i] += src[i];
                         }
                       }
                     });
}

template <typename T>
Var<T> tile_channels(Var<T> input, int times) {
  require(times >= 1, "tile_channels: times must be >= 1");
  std::vector<Var<T>> copies(static_cast<std::size_t>(times), input);
  if (times == 1) return input;
  return concat_channels(copies);
}

template <typename T>
Var<T> upsample_nearest(Var<T> input, int scale) {
  require(scale >= 1, "upsample_nearest: scale must be >= 1");
  if (scale == 1) return input;
  auto& tape = tape_of(input);
  const Shape4 s = input.shape();
  const auto& x = input.value();
  Tensor4<T> out(s.n, s.c, s.h * scale, s.w * scale);
  for (int b = 0; b < s.n; ++b) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.plane(b, c);
      T* dst = out.plane(b, c);
      for (int y = 0; y < s.h * scale; ++y) {
        for (int xx = 0; xx < s.w * scale; ++xx) {
          dst[static_cast<std::size_t>(y) * s.w * scale + xx] =
              src[static_cast<std::size_t>(y / scale) * s.w + xx / scale];
        }
      }
    }
  }
  return tape.record(std::move(out), {input},
                     [input, scale](Tape<T>& t, std::size_t self) {
                       const auto& dy = t.grad(self);
                       auto& dx = t.grad(input.id);
                       const int wo = dy.w();
                       const int wi = dx.w();
                       for (int b = 0; b < dy.n(); ++b) {
                         for (int c = 0; c < dy.c(); ++c) {
                           const T* src = dy.plane(b, c);
                           T* dst = dx.plane(b, c);
                           for (int y = 0; y < dy.h(); ++y) {
                             for (int xx = 0; xx < wo; ++xx) {
                               dst[static_cast<std::size_t>(y / scale) * wi +
                                   xx / scale] +=
                                   src[static_cast<std::size_t>(y) * wo + xx];
                             }
                           }
                         }
                       }
                     });
}

namespace {

// Maps between the (c*r*r, h, w) and (c, h*r, w*r) layouts. `forward` copies
// from packed to spatial, otherwise from spatial to packed; `acc` adds.
template <typename T>
void shuffle_copy(const T* src, T* dst, int n, int c_out, int h, int w, int r,
                  bool to_spatial, bool acc) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t big = hw * r * r;
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < c_out; ++c) {
      for (int a = 0; a < r; ++a) {
        for (int bb = 0; bb < r; ++bb) {
          const std::size_t packed_plane =
              (static_cast<std::size_t>(b) * c_out * r * r +
               static_cast<std::size_t>(c) * r * r + a * r + bb) *
              hw;
          for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
              const std::size_t pi = packed_plane + static_cast<std::size_t>(y) * w + x;
              const std::size_t si =
                  (static_cast<std::size_t>(b) * c_out + c) * big +
                  static_cast<std::size_t>(y * r + a) * (w * r) + (x * r + bb);
              if (to_spatial) {
                dst[si] = acc ? dst[si] + src[pi] : src[pi];
              } else {
                dst[pi] = acc ? dst[pi] + src[si] : src[si];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> pixel_shuffle(Var<T> input, int r) {
  require(r >= 1, "pixel_shuffle: r must be >= 1");
  const Shape4 s = input.shape();
  require(s.c % (r * r) == 0, "pixel_shuffle: channels " + std::to_string(s.c) +
                                  " not divisible by r^2 = " +
                                  std::to_string(r * r));
  if (r == 1) return input;
  auto& tape = tape_of(input);
  const int c_out = s.c / (r * r);
  Tensor4<T> out(s.n, c_out, s.h * r, s.w * r);
  shuffle_copy(input.value().data(), out.data(), s.n, c_out, s.h,
               s.w, r, true, false);
  return tape.record(std::move(out), {input},
                     [input, r, s, c_out](Tape<T>& t, std::size_t self) {
                       shuffle_copy(t.grad(self).data(),
                                    t.grad(input.id).data(), s.n, c_out, s.h,
                                    s.w, r, false, true);
                     });
}

template <typename T>
Var<T> pixel_unshuffle(Var<T> input, int r) {
  require(r >= 1, "pixel_unshuffle: r must be >= 1");
  const Shape4 s = input.shape();
  require(s.h % r == 0 && s.w % r == 0,
          "pixel_unshuffle: spatial dims of " + s.str() +
              " not divisible by r = " + std::to_string(r));
  if (r == 1) return input;
  auto& tape = tape_of(input);
  const int h = s.h / r;
  const int w = s.w / r;
  Tensor4<T> out(s.n, s.c * r * r, h, w);
  shuffle_copy(input.value().data(), out.data(), s.n, s.c, h, w,
               r, false, false);
  return tape.record(std::move(out), {input},
                     [input, r, s, h, w](Tape<T>& t, std::size_t self) {
                       shuffle_copy(t.grad(self).data(),
                                    t.grad(input.id).data(), s.n, s.c, h, w, r,
                                    true, true);
                     });
}

namespace {

template <typename T, typename Fwd, typename Bwd>
Var<T> binary_same_shape(Var<T> a, Var<T> b, const char* name, Fwd fwd,
                         Bwd bwd) {
  auto& tape = tape_of(a);
  require_same_shape(a.shape(), b.shape(), name);
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor4<T> out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = fwd(av[i], bv[i]);
  return tape.record(std::move(out), {a, b},
                     [a, b, bwd](Tape<T>& t, std::size_t self) {
                       bwd(t, self, a, b);
                     });
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary_same_shape<T>(
      a, b, "add", [](T x, T y) { return x + y; },
      [](Tape<T>& t, std::size_t self, Var<T> a, Var<T> b) {
        const auto& dy = t.grad(self);
        if (t.requires_grad(a.id)) accumulate(t.grad(a.id), dy);
        if (t.requires_grad(b.id)) accumulate(t.grad(b.id), dy);
      });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary_same_shape<T>(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](Tape<T>& t, std::size_t self, Var<T> a, Var<T> b) {
        const auto& dy = t.grad(self);
        if (t.requires_grad(a.id)) accumulate(t.grad(a.id), dy);
        if (t.requires_grad(b.id)) {
          auto& db = t.grad(b.id);
          for (std::size_t i = 0; i < dy.numel(); ++i) db[i] -= dy[i];
        }
      });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary_same_shape<T>(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](Tape<T>& t, std::size_t self, Var<T> a, Var<T> b) {
        const auto& dy = t.grad(self);
        const auto& av = t.value(a.id);
        const auto& bv = t.value(b.id);
        if (t.requires_grad(a.id)) {
          auto& da = t.grad(a.id);
          for (std::size_t i = 0; i < dy.numel(); ++i) da[i] += dy[i] * bv[i];
        }
        if (t.requires_grad(b.id)) {
          auto& db = t.grad(b.id);
          for (std::size_t i = 0; i < dy.numel(); ++i) db[i] += dy[i] * av[i];
        }
      });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  auto& tape = tape_of(a);
  const auto& av = a.value();
  Tensor4<T> out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] * factor;
  return tape.record(std::move(out), {a},
                     [a, factor](Tape<T>& t, std::size_t self) {
                       const auto& dy = t.grad(self);
                       auto& da = t.grad(a.id);
                       for (std::size_t i = 0; i < dy.numel(); ++i) {
                         da[i] += dy[i] * factor;
                       }
                     });
}

template <typename T>
Var<T> mul_channel_broadcast(Var<T> x, Var<T> w) {
  auto& tape = tape_of(x);
  const Shape4 xs = x.shape();
  const Shape4 ws = w.shape();
  require(ws.n == xs.n && ws.c == 1 && ws.same_spatial(xs),
          "mul_channel_broadcast: weight " + ws.str() +
              " incompatible with input " + xs.str());
  const auto& xv = x.value();
  const auto& wv = w.value();
  const std::size_t plane = xs.plane();
  Tensor4<T> out(xs);
  for (int b = 0; b < xs.n; ++b) {
    const T* wp = wv.plane(b, 0);
    for (int c = 0; c < xs.c; ++c) {
      const T* src = xv.plane(b, c);
      T* dst = out.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * wp[i];
    }
  }
  return tape.record(
      std::move(out), {x, w}, [x, w, plane](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& xv = t.value(x.id);
        const auto& wv = t.value(w.id);
        const bool need_x = t.requires_grad(x.id);
        const bool need_w = t.requires_grad(w.id);
        for (int b = 0; b < dy.n(); ++b) {
          const T* wp = wv.plane(b, 0);
          for (int c = 0; c < dy.c(); ++c) {
            const T* g = dy.plane(b, c);
            if (need_x) {
              T* dx = t.grad(x.id).plane(b, c);
              for (std::size_t i = 0; i < plane; ++i) dx[i] += g[i] * wp[i];
            }
            if (need_w) {
              const T* xp = xv.plane(b, c);
              T* dw = t.grad(w.id).plane(b, 0);
              for (std::size_t i = 0; i < plane; ++i) dw[i] += g[i] * xp[i];
            }
          }
        }
      });
}

template <typename T>
Var<T> channel_mean_product(Var<T> a, Var<T> b) {
  auto& tape = tape_of(a);
  require_same_shape(a.shape(), b.shape(), "channel_mean_product");
  const Shape4 s = a.shape();
  const auto& av = a.value();
  const auto& bv = b.value();
  const std::size_t plane = s.plane();
  const T inv_c = T(1) / static_cast<T>(s.c);
  Tensor4<T> out(s.n, 1, s.h, s.w);
  for (int n = 0; n < s.n; ++n) {
    T* dst = out.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const T* pa = av.plane(n, c);
      const T* pb = bv.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) dst[i] += pa[i] * pb[i];
    }
    for (std::size_t i = 0; i < plane; ++i) dst[i] *= inv_c;
  }
  return tape.record(
      std::move(out), {a, b}, [a, b, plane, inv_c](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& av = t.value(a.id);
        const auto& bv = t.value(b.id);
        const bool need_a = t.requires_grad(a.id);
        const bool need_b = t.requires_grad(b.id);
        for (int n = 0; n < av.n(); ++n) {
          const T* g = dy.plane(n, 0);
          for (int c = 0; c < av.c(); ++c) {
            if (need_a) {
              T* da = t.grad(a.id).plane(n, c);
              const T* pb = bv.plane(n, c);
              for (std::size_t i = 0; i < plane; ++i) da[i] += g[i] * pb[i] * inv_c;
            }
            if (need_b) {
              T* db = t.grad(b.id).plane(n, c);
              const T* pa = av.plane(n, c);
              for (std::size_t i = 0; i < plane; ++i) db[i] += g[i] * pa[i] * inv_c;
            }
          }
        }
      });
}

template <typename T>
Var<T> softmax_channels(Var<T> input) {
  auto& tape = tape_of(input);
  const Shape4 s = input.shape();
  const auto& x = input.value();
  Tensor4<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int y = 0; y < s.h; ++y) {
      for (int xx = 0; xx < s.w; ++xx) {
        T mx = -std::numeric_limits<T>::infinity();
        for (int c = 0; c < s.c; ++c) mx = std::max(mx, x(n, c, y, xx));
        T total = 0;
        for (int c = 0; c < s.c; ++c) {
          const T e = std::exp(x(n, c, y, xx) - mx);
          out(n, c, y, xx) = e;
          total += e;
        }
        for (int c = 0; c < s.c; ++c) out(n, c, y, xx) /= total;
      }
    }
  }
  return tape.record(std::move(out), {input},
                     [input](Tape<T>& t, std::size_t self) {
                       const auto& dy = t.grad(self);
                       const auto& p = t.value(self);
                       auto& dx = t.grad(input.id);
                       const Shape4 s = p.shape();
                       for (int n = 0; n < s.n; ++n) {
                         for (int y = 0; y < s.h; ++y) {
                           for (int xx = 0; xx < s.w; ++xx) {
                             T dot = 0;
                             for (int c = 0; c < s.c; ++c) {
                               dot += dy(n, c, y, xx) * p(n, c, y, xx);
                             }
                             for (int c = 0; c < s.c; ++c) {
                               dx(n, c, y, xx) +=
                                   p(n, c, y, xx) * (dy(n, c, y, xx) - dot);
                             }
                           }
                         }
                       }
                     });
}

template <typename T>
Var<T> l2_normalize_channels(Var<T> input, T eps) {
  auto& tape = tape_of(input);
  const Shape4 s = input.shape();
  const auto& x = input.value();
  const std::size_t plane = s.plane();
  Tensor4<T> out(s);
  // Per-pixel divisor, kept for the backward pass.
  Tensor4<T> denom(s.n, 1, s.h, s.w);
  for (int n = 0; n < s.n; ++n) {
    T* d = denom.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) d[i] += p[i] * p[i];
    }
    for (std::size_t i = 0; i < plane; ++i) d[i] = std::max(std::sqrt(d[i]), eps);
    for (int c = 0; c < s.c; ++c) {
      const T* p = x.plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] = p[i] / d[i];
    }
  }
  return tape.record(
      std::move(out), {input},
      [input, eps, plane, denom = std::move(denom)](Tape<T>& t,
                                                    std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& y = t.value(self);
        auto& dx = t.grad(input.id);
        AlignedVector<T> dot(plane);
        for (int n = 0; n < y.n(); ++n) {
          const T* d = denom.plane(n, 0);
          std::fill(dot.begin(), dot.end(), T(0));
          for (int c = 0; c < y.c(); ++c) {
            const T* g = dy.plane(n, c);
            const T* yp = y.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) dot[i] += g[i] * yp[i];
          }
          for (int c = 0; c < y.c(); ++c) {
            const T* g = dy.plane(n, c);
            const T* yp = y.plane(n, c);
            T* o = dx.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
              // Below eps the map is linear: y = x / eps.
              o[i] += d[i] > eps ? (g[i] - yp[i] * dot[i]) / d[i] : g[i] / eps;
            }
          }
        }
      });
}

template <typename T>
Var<T> sum_all(Var<T> input) {
  auto& tape = tape_of(input);
  T total = 0;
  for (T v : input.value().span()) total += v;
  return tape.record(Tensor4<T>(1, 1, 1, 1, total), {input},
                     [input](Tape<T>& t, std::size_t self) {
                       const T g = t.grad(self)[0];
                       auto& dx = t.grad(input.id);
                       for (auto& v : dx.span()) v += g;
                     });
}

#define FLOWDEFORM_INSTANTIATE(T)                                           \
  template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, int, int);              \
  template Var<T> leaky_relu<T>(Var<T>, T);                                 \
  template Var<T> sigmoid<T>(Var<T>);                                       \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);           \
  template Var<T> slice_channels<T>(Var<T>, int, int);                      \
  template Var<T> tile_channels<T>(Var<T>, int);                            \
  template Var<T> upsample_nearest<T>(Var<T>, int);                         \
  template Var<T> pixel_shuffle<T>(Var<T>, int);                            \
  template Var<T> pixel_unshuffle<T>(Var<T>, int);                          \
  template Var<T> add<T>(Var<T>, Var<T>);                                   \
  template Var<T> sub<T>(Var<T>, Var<T>);                                   \
  template Var<T> mul<T>(Var<T>, Var<T>);                                   \
  template Var<T> scale<T>(Var<T>, T);                                      \
  template Var<T> mul_channel_broadcast<T>(Var<T>, Var<T>);                 \
  template Var<T> channel_mean_product<T>(Var<T>, Var<T>);                  \
  template Var<T> softmax_channels<T>(Var<T>);                              \
  template Var<T> l2_normalize_channels<T>(Var<T>, T);                      \
  template Var<T> sum_all<T>(Var<T>);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
