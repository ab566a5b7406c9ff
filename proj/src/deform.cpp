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

#include "flowdeform/deform.hpp"

#include <Eigen/Core>
#include <cmath>
#include <ostream>

#include "bilinear.hpp"
#include "flowdeform/sampling.hpp"

namespace flowdeform {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Bilinear corners for every (tap, pixel) of one batch element.
template <typename T>
std::vector<detail::Corners<T>> tap_corners(const Tensor4<T>& disp, int b,
                                            const KernelTaps& taps, int h,
                                            int w) {
  const int K = taps.size();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<detail::Corners<T>> cs(K * hw);
  for (int k = 0; k < K; ++k) {
    const T* ox = disp.plane(b, 2 * k);
    const T* oy = disp.plane(b, 2 * k + 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const T px = static_cast<T>(x + taps[k].dx) + ox[i];
        const T py = static_cast<T>(y + taps[k].dy) + oy[i];
        cs[k * hw + i] = detail::Corners<T>::at(px, py, h, w);
      }
    }
  }
  return cs;
}

// raw[(c*K + k)*hw + i] = bilinear read of channel c for tap k at pixel i.
template <typename T>
void gather(const Tensor4<T>& x, int b, const std::vector<detail::Corners<T>>& cs,
            int K, AlignedVector<T>& raw) {
  const std::size_t hw = x.shape().plane();
  for (int c = 0; c < x.c(); ++c) {
    const T* src = x.plane(b, c);
    for (int k = 0; k < K; ++k) {
      T* dst = raw.data() + (static_cast<std::size_t>(c) * K + k) * hw;
      const auto* ck = cs.data() + k * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = ck[i].value(src);
    }
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

std::string to_string(FdcMode mode) {
  switch (mode) {
    case FdcMode::kNone:
      return "none";
    case FdcMode::kNaive:
      return "naive";
    case FdcMode::kAdvanced:
      return "advanced";
  }
  return "unknown";
}

FdcMode parse_fdc_mode(const std::string& s) {
  if (s == "none") return FdcMode::kNone;
  if (s == "naive") return FdcMode::kNaive;
  if (s == "advanced") return FdcMode::kAdvanced;
  throw std::invalid_argument("unknown fdc mode '" + s +
                              "' (expected none|naive|advanced)");
}

void SampleTrace::write_csv(std::ostream& os) const {
  os << "y,x,tap,abs_x,abs_y,modulation\n";
  os.precision(9);
  for (const auto& r : rows) {
    os << r.y << ',' << r.x << ',' << r.tap << ',' << r.abs_x << ',' << r.abs_y
       << ',' << r.modulation << '\n';
  }
}

template <typename T>
Var<T> deform_conv(Var<T> input, Var<T> disp, Var<T> modulations,
                   Var<T> weight, Var<T> bias, const KernelTaps& taps,
                   SampleTrace* trace) {
  auto& tape = *input.tape;
  const Shape4 xs = input.shape();
  const Shape4 ds = disp.shape();
  const Shape4 ms = modulations.shape();
  const Shape4 ws = weight.shape();
  const int K = taps.size();
  require(ds.c == 2 * K && ms.c == K,
          "deform_conv: bundle has " + std::to_string(ds.c) + " offset and " +
              std::to_string(ms.c) + " modulation channels, kernel has " +
              std::to_string(K) + " taps");
  require(ds.n == xs.n && ms.n == xs.n && ds.same_spatial(xs) &&
              ms.same_spatial(xs),
          "deform_conv: bundle " + ds.str() + "/" + ms.str() +
              " does not match input " + xs.str());
  require(ws.c == xs.c && ws.h == 3 && ws.w == 3,
          "deform_conv: weight " + ws.str() + " incompatible with input " +
              xs.str());
  const bool has_bias = bias.valid();
  const int c_out = ws.n;
  const std::size_t hw = xs.plane();
  const int rows = xs.c * K;

  const auto& xv = input.value();
  const auto& dv = disp.value();
  const auto& mv = modulations.value();
  Eigen::Map<const MatR<T>> W(weight.value().data(), c_out, rows);
  Tensor4<T> out(xs.n, c_out, xs.h, xs.w);
  AlignedVector<T> col(static_cast<std::size_t>(rows) * hw);
  for (int b = 0; b < xs.n; ++b) {
    const auto cs = tap_corners(dv, b, taps, xs.h, xs.w);
    gather(xv, b, cs, K, col);
    for (int c = 0; c < xs.c; ++c) {
      for (int k = 0; k < K; ++k) {
        T* row = col.data() + (static_cast<std::size_t>(c) * K + k) * hw;
        const T* m = mv.plane(b, k);
        for (std::size_t i = 0; i < hw; ++i) row[i] *= m[i];
      }
    }
    Eigen::Map<const MatR<T>> C(col.data(), rows, hw);
    Eigen::Map<MatR<T>> Y(out.plane(b, 0), c_out, hw);
    Y.noalias() = W * C;
    if (has_bias) {
      const auto& bv = bias.value();
      for (int o = 0; o < c_out; ++o) Y.row(o).array() += bv[o];
    }
    if (trace != nullptr && trace->batch == b) {
      for (int y = 0; y < xs.h; ++y) {
        for (int x = 0; x < xs.w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * xs.w + x;
          for (int k = 0; k < K; ++k) {
            trace->rows.push_back(
                {y, x, k,
                 static_cast<double>(x + taps[k].dx) + dv.plane(b, 2 * k)[i],
                 static_cast<double>(y + taps[k].dy) + dv.plane(b, 2 * k + 1)[i],
                 static_cast<double>(mv.plane(b, k)[i])});
          }
        }
      }
    }
  }

  std::vector<Var<T>> parents{input, disp, modulations, weight};
  if (has_bias) parents.push_back(bias);
  return tape.record(
      std::move(out), parents,
      [=](Tape<T>& t, std::size_t self) {
        const auto& dy = t.grad(self);
        const auto& xv = t.value(input.id);
        const auto& dv = t.value(disp.id);
        const auto& mv = t.value(modulations.id);
        const Shape4 xs = xv.shape();
        Eigen::Map<const MatR<T>> W(t.value(weight.id).data(), c_out, rows);
        const bool need_x = t.requires_grad(input.id);
        const bool need_d = t.requires_grad(disp.id);
        const bool need_m = t.requires_grad(modulations.id);
        const bool need_w = t.requires_grad(weight.id);
        const bool need_b = has_bias && t.requires_grad(bias.id);

        AlignedVector<T> raw(static_cast<std::size_t>(rows) * hw);
        AlignedVector<T> col(need_w ? raw.size() : 0);
        AlignedVector<T> dcol(raw.size());
        for (int b = 0; b < xs.n; ++b) {
          const auto cs = tap_corners(dv, b, taps, xs.h, xs.w);
          gather(xv, b, cs, K, raw);
          Eigen::Map<const MatR<T>> DY(dy.plane(b, 0), c_out, hw);
          if (need_w) {
            for (int c = 0; c < xs.c; ++c) {
              for (int k = 0; k < K; ++k) {
                const std::size_t off = (static_cast<std::size_t>(c) * K + k) * hw;
                const T* m = mv.plane(b, k);
                for (std::size_t i = 0; i < hw; ++i) col[off + i] = raw[off + i] * m[i];
              }
            }
            Eigen::Map<const MatR<T>> C(col.data(), rows, hw);
            Eigen::Map<MatR<T>> DW(t.grad(weight.id).data(), c_out, rows);
            DW.noalias() += DY * C.transpose();
          }
          if (need_b) {
            auto& db = t.grad(bias.id);
            for (int o = 0; o < c_out; ++o) db[o] += DY.row(o).sum();
          }
          if (!(need_x || need_d || need_m)) continue;
          Eigen::Map<MatR<T>> DC(dcol.data(), rows, hw);
          DC.noalias() = W.transpose() * DY;
          for (int k = 0; k < K; ++k) {
            const T* m = mv.plane(b, k);
            const auto* ck = cs.data() + k * hw;
            T* gm = need_m ? t.grad(modulations.id).plane(b, k) : nullptr;
            T* gx = need_d ? t.grad(disp.id).plane(b, 2 * k) : nullptr;
            T* gy = need_d ? t.grad(disp.id).plane(b, 2 * k + 1) : nullptr;
            for (int c = 0; c < xs.c; ++c) {
              const std::size_t off = (static_cast<std::size_t>(c) * K + k) * hw;
              const T* g = dcol.data() + off;
              const T* r = raw.data() + off;
              const T* src = xv.plane(b, c);
              T* dx = need_x ? t.grad(input.id).plane(b, c) : nullptr;
              for (std::size_t i = 0; i < hw; ++i) {
                if (!ck[i].any()) continue;
                if (need_m) gm[i] += g[i] * r[i];
                const T gmi = g[i] * m[i];
                if (need_x) ck[i].scatter(dx, gmi);
                if (need_d) {
                  T px, py;
                  ck[i].position_grad(src, px, py);
                  gx[i] += gmi * px;
                  gy[i] += gmi * py;
                }
              }
            }
          }
        }
      });
}

template <typename T>
Tensor4<T> total_offset(const Tensor4<T>& offsets, const KernelTaps& taps) {
  const int K = taps.size();
  require(offsets.c() == 2 * K,
          "total_offset: expected " + std::to_string(2 * K) +
              " offset channels, got " + offsets.shape().str());
  Tensor4<T> out = offsets;
  const std::size_t hw = offsets.shape().plane();
  for (int b = 0; b < offsets.n(); ++b) {
    for (int k = 0; k < K; ++k) {
      T* ox = out.plane(b, 2 * k);
      T* oy = out.plane(b, 2 * k + 1);
      for (std::size_t i = 0; i < hw; ++i) {
        ox[i] += static_cast<T>(taps[k].dx);
        oy[i] += static_cast<T>(taps[k].dy);
      }
    }
  }
  return out;
}

template <typename T>
std::vector<double> offset_histogram(const Tensor4<T>& offsets,
                                     const KernelTaps& taps,
                                     const std::vector<double>& edges) {
  require(offsets.numel() > 0, "offset_histogram: empty offset bundle");
  require(edges.size() >= 2, "offset_histogram: need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    require(edges[i] > edges[i - 1],
            "offset_histogram: bin edges must be strictly increasing");
  }
  const Tensor4<T> total = total_offset(offsets, taps);
  const int K = taps.size();
  const std::size_t hw = total.shape().plane();
  std::vector<std::size_t> counts(edges.size() - 1, 0);
  std::size_t n = 0;
  for (int b = 0; b < total.n(); ++b) {
    for (int k = 0; k < K; ++k) {
      const T* ox = total.plane(b, 2 * k);
      const T* oy = total.plane(b, 2 * k + 1);
      for (std::size_t i = 0; i < hw; ++i) {
        const double mag = std::hypot(static_cast<double>(ox[i]),
                                      static_cast<double>(oy[i]));
        ++n;
        auto it = std::upper_bound(edges.begin(), edges.end(), mag);
        if (it == edges.begin() || it == edges.end()) continue;
        ++counts[static_cast<std::size_t>(it - edges.begin()) - 1];
      }
    }
  }
  std::vector<double> fractions(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    fractions[i] = static_cast<double>(counts[i]) / static_cast<double>(n);
  }
  return fractions;
}

std::vector<int> truncated_percent(const std::vector<double>& fractions) {
  std::vector<int> out;
  out.reserve(fractions.size());
  // The small bias keeps exact fractions such as 0.29 from landing on 28.
  for (double f : fractions) out.push_back(static_cast<int>(std::floor(f * 100.0 + 1e-9)));
  return out;
}

void write_histogram_csv(std::ostream& os, const std::vector<double>& edges,
                         const std::vector<double>& fractions) {
  require(fractions.size() + 1 == edges.size(),
          "write_histogram_csv: edges/fractions size mismatch");
  const auto pct = truncated_percent(fractions);
  os << "bin_lo,bin_hi,fraction,truncated_percent\n";
  os.precision(10);
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    os << edges[i] << ',' << edges[i + 1] << ',' << fractions[i] << ','
       << pct[i] << '\n';
  }
}

template <typename T>
void add_offset_head(ParamStore<T>& store, const std::string& prefix,
                     int channels, std::mt19937_64& rng, double slope) {
  const int K = KernelTaps::kCount;
  add_conv(store, prefix + ".conv0", 2 * channels, channels, 3, rng, slope);
  add_conv(store, prefix + ".conv1", channels, channels, 3, rng, slope);
  add_conv(store, prefix + ".conv2", channels, 3 * K, 3, rng, slope, Init::kZero);
}

template <typename T>
OffsetBundle<T> offset_head(Tape<T>& tape, ParamStore<T>& store,
                            const std::string& prefix, Var<T> reference,
                            Var<T> neighbor, T slope) {
  require_same_shape(reference.shape(), neighbor.shape(), "offset_head");
  const int K = KernelTaps::kCount;
  Var<T> h = concat_channels<T>({reference, neighbor});
  h = leaky_relu(conv(tape, store, prefix + ".conv0", h), slope);
  h = leaky_relu(conv(tape, store, prefix + ".conv1", h), slope);
  h = conv(tape, store, prefix + ".conv2", h);
  return OffsetBundle<T>{slice_channels(h, 0, 2 * K),
                         sigmoid(slice_channels(h, 2 * K, K))};
}

template <typename T>
void add_deform_layer(ParamStore<T>& store, const std::string& prefix,
                      int channels, std::mt19937_64& rng, double slope) {
  add_offset_head(store, prefix + ".head", channels, rng, slope);
  add_conv(store, prefix + ".dcn", channels, channels, 3, rng, slope);
}

template <typename T>
DeformLayerOutput<T> deform_layer(Tape<T>& tape, ParamStore<T>& store,
                                  const std::string& prefix, Var<T> reference,
                                  Var<T> neighbor, T slope,
                                  SampleTrace* trace) {
  auto bundle = offset_head(tape, store, prefix + ".head", reference, neighbor,
                            slope);
  auto out = deform_conv(neighbor, bundle.offsets, bundle.modulations,
                         tape.param(store.at(prefix + ".dcn.weight")),
                         tape.param(store.at(prefix + ".dcn.bias")),
                         KernelTaps::grid3x3(), trace);
  return {out, bundle};
}

template <typename T>
DeformLayerOutput<T> fdc(Tape<T>& tape, ParamStore<T>& store,
                         const std::string& prefix, Var<T> reference,
                         Var<T> neighbor, Var<T> flow, FdcMode mode, T slope,
                         SampleTrace* trace) {
  if (mode == FdcMode::kNone) {
    return deform_layer(tape, store, prefix, reference, neighbor, slope, trace);
  }
  require(flow.valid(), "fdc: flow-guided mode requires a flow field");
  const Shape4 fs = flow.shape();
  require(fs.c == 2 && fs.n == neighbor.shape().n &&
              fs.same_spatial(neighbor.shape()),
          "fdc: flow " + fs.str() + " does not match features " +
              neighbor.shape().str());
  const KernelTaps taps = KernelTaps::grid3x3();
  const int K = taps.size();

  Var<T> warped = warp(neighbor, flow);
  auto bundle = offset_head(tape, store, prefix + ".head", reference, warped,
                            slope);
  Var<T> disp;
  if (mode == FdcMode::kAdvanced) {
    disp = add(bundle.offsets, tile_channels(flow, K));
  } else {
    std::vector<Var<T>> per_tap;
    per_tap.reserve(K);
    for (int k = 0; k < K; ++k) {
      Var<T> dk = slice_channels(bundle.offsets, 2 * k, 2);
      Var<T> fk = sample_displaced(flow, dk, static_cast<T>(taps[k].dx),
                                   static_cast<T>(taps[k].dy));
      per_tap.push_back(add(dk, fk));
    }
    disp = concat_channels(per_tap);
  }
  auto out = deform_conv(neighbor, disp, bundle.modulations,
                         tape.param(store.at(prefix + ".dcn.weight")),
                         tape.param(store.at(prefix + ".dcn.bias")), taps, trace);
  return {out, bundle};
}

template <typename T>
void add_fdm(ParamStore<T>& store, const std::string& prefix, int channels,
             std::mt19937_64& rng, double slope) {
  add_deform_layer(store, prefix + ".l1", channels, rng, slope);
  add_deform_layer(store, prefix + ".l2", channels, rng, slope);
}

template <typename T>
FdmOutput<T> fdm(Tape<T>& tape, ParamStore<T>& store, const std::string& prefix,
                 Var<T> reference, Var<T> neighbor, Var<T> flow, FdcMode mode,
                 T slope, SampleTrace* trace) {
  auto first = fdc(tape, store, prefix + ".l1", reference, neighbor, flow, mode,
                   slope, trace);
  auto second = deform_layer(tape, store, prefix + ".l2", reference,
                             first.aligned, slope);
  return {second.aligned, first.bundle, second.bundle};
}

#define FLOWDEFORM_INSTANTIATE(T)                                              \
  template Var<T> deform_conv<T>(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>,       \
                                 const KernelTaps&, SampleTrace*);             \
  template Tensor4<T> total_offset<T>(const Tensor4<T>&, const KernelTaps&);   \
  template std::vector<double> offset_histogram<T>(                            \
      const Tensor4<T>&, const KernelTaps&, const std::vector<double>&);       \
  template void add_offset_head<T>(ParamStore<T>&, const std::string&, int,    \
                                   std::mt19937_64&, double);                  \
  template OffsetBundle<T> offset_head<T>(Tape<T>&, ParamStore<T>&,            \
                                          const std::string&, Var<T>, Var<T>,  \
                                          T);                                  \
  template void add_deform_layer<T>(ParamStore<T>&, const std::string&, int,   \
                                    std::mt19937_64&, double);                 \
  template DeformLayerOutput<T> deform_layer<T>(                               \
      Tape<T>&, ParamStore<T>&, const std::string&, Var<T>, Var<T>, T,         \
      SampleTrace*);                                                           \
  template DeformLayerOutput<T> fdc<T>(Tape<T>&, ParamStore<T>&,               \
                                       const std::string&, Var<T>, Var<T>,     \
                                       Var<T>, FdcMode, T, SampleTrace*);      \
  template void add_fdm<T>(ParamStore<T>&, const std::string&, int,            \
                           std::mt19937_64&, double);                          \
  template FdmOutput<T> fdm<T>(Tape<T>&, ParamStore<T>&, const std::string&,   \
                               Var<T>, Var<T>, Var<T>, FdcMode, T,             \
                               SampleTrace*);

FLOWDEFORM_INSTANTIATE(float)
FLOWDEFORM_INSTANTIATE(double)

}  // namespace flowdeform
