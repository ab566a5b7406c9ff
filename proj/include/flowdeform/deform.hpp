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

#include <array>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "flowdeform/layers.hpp"

namespace flowdeform {

/// One fixed kernel position relative to the output pixel.
struct Tap {
  int dx = 0;
  int dy = 0;
};

/// The K = 9 taps of a 3x3 kernel, row-major: k = (dy + 1) * 3 + (dx + 1).
/// Tap k pairs with weight[:, :, dy + 1, dx + 1] and with offset channels
/// (2k, 2k + 1) = (dx, dy) and modulation channel k.
struct KernelTaps {
  static constexpr int kCount = 9;
  std::array<Tap, kCount> taps{};

  static KernelTaps grid3x3() {
    KernelTaps t;
    for (int k = 0; k < kCount; ++k) t.taps[k] = Tap{k % 3 - 1, k / 3 - 1};
    return t;
  }
  int size() const { return kCount; }
  const Tap& operator[](int k) const { return taps[k]; }
};

/// Learned per-pixel offsets (n, 2K, h, w) and modulation scalars (n, K, h, w).
template <typename T>
struct OffsetBundle {
  Var<T> offsets;
  Var<T> modulations;
};

/// Absolute sample positions recorded by a deformable layer for one batch
/// element.
struct SampleTrace {
  struct Row {
    int y, x, tap;
    double abs_x, abs_y, modulation;
  };
  int batch = 0;
  std::vector<Row> rows;

  void write_csv(std::ostream& os) const;
};

enum class FdcMode { kNone, kNaive, kAdvanced };

std::string to_string(FdcMode mode);
FdcMode parse_fdc_mode(const std::string& s);

// ---------------------------------------------------------------------------
// Sampling-conv core.

/// Modulated deformable 3x3 convolution. Tap k at output pixel p reads
/// `input` bilinearly at p + taps[k] + disp_k(p), scales by modulation k, and
/// the K reads are combined by `weight` (c_out, c_in, 3, 3) plus `bias`.
/// `disp` is (n, 2K, h, w). Differentiable in every argument.
template <typename T>
Var<T> deform_conv(Var<T> input, Var<T> disp, Var<T> modulations,
                   Var<T> weight, Var<T> bias, const KernelTaps& taps,
                   SampleTrace* trace = nullptr);

/// Per-tap total displacement p_k + offset_k, same layout as the offsets.
template <typename T>
Tensor4<T> total_offset(const Tensor4<T>& offsets, const KernelTaps& taps);

/// Fraction of |p_k + offset_k| magnitudes (over every pixel and tap) that
/// falls in [edges[i], edges[i + 1]). Magnitudes outside all bins count in the
/// denominator only.
template <typename T>
std::vector<double> offset_histogram(const Tensor4<T>& offsets,
                                     const KernelTaps& taps,
                                     const std::vector<double>& edges);

/// Percentages rounded down to integers for display.
std::vector<int> truncated_percent(const std::vector<double>& fractions);

/// CSV with columns bin_lo, bin_hi, fraction, truncated_percent.
void write_histogram_csv(std::ostream& os, const std::vector<double>& edges,
                         const std::vector<double>& fractions);

// ---------------------------------------------------------------------------
// Alignment layers built from parameters in a ParamStore.

/// Registers an offset head (3 convs: 2c -> c -> c -> 3K, last one zeroed)
/// under `prefix`.
template <typename T>
void add_offset_head(ParamStore<T>& store, const std::string& prefix,
                     int channels, std::mt19937_64& rng, double slope);

/// [reference, neighbor] -> conv/act -> conv/act -> conv -> split into 2K
/// offsets and K sigmoid modulations.
template <typename T>
OffsetBundle<T> offset_head(Tape<T>& tape, ParamStore<T>& store,
                            const std::string& prefix, Var<T> reference,
                            Var<T> neighbor, T slope);

/// Registers head + deformable weights for one layer under `prefix`.
template <typename T>
void add_deform_layer(ParamStore<T>& store, const std::string& prefix,
                      int channels, std::mt19937_64& rng, double slope);

template <typename T>
struct DeformLayerOutput {
  Var<T> aligned;
  OffsetBundle<T> bundle;
};

/// Plain deformable layer: the head sees [reference, neighbor] and sampling
/// happens on `neighbor`.
template <typename T>
DeformLayerOutput<T> deform_layer(Tape<T>& tape, ParamStore<T>& store,
                                  const std::string& prefix, Var<T> reference,
                                  Var<T> neighbor, T slope,
                                  SampleTrace* trace = nullptr);

/// Flow-guided deformable layer. In both modes the head sees
/// [reference, warp(neighbor, flow)]. kAdvanced reads the original neighbor at
/// p + p_k + offset_k + flow(p); kNaive reads it at q + flow(q) with
/// q = p + p_k + offset_k, i.e. the warped map sampled at q. kNone ignores the
/// flow and behaves as deform_layer().
template <typename T>
DeformLayerOutput<T> fdc(Tape<T>& tape, ParamStore<T>& store,
                         const std::string& prefix, Var<T> reference,
                         Var<T> neighbor, Var<T> flow, FdcMode mode, T slope,
                         SampleTrace* trace = nullptr);

template <typename T>
struct FdmOutput {
  Var<T> aligned;
  OffsetBundle<T> first;
  OffsetBundle<T> second;
};

/// Registers the two-layer cascade under `prefix` (".l1", ".l2").
template <typename T>
void add_fdm(ParamStore<T>& store, const std::string& prefix, int channels,
             std::mt19937_64& rng, double slope);

/// fdc() followed by a plain deformable refinement whose head sees
/// [reference, first-layer output] and which samples the first-layer output.
template <typename T>
FdmOutput<T> fdm(Tape<T>& tape, ParamStore<T>& store, const std::string& prefix,
                 Var<T> reference, Var<T> neighbor, Var<T> flow, FdcMode mode,
                 T slope, SampleTrace* trace = nullptr);

}  // namespace flowdeform
