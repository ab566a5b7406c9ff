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

#include <random>
#include <string>

#include "flowdeform/layers.hpp"

namespace flowdeform {

// Matching-based flow estimation at quarter resolution followed by a learned
// residual refinement at feature resolution. Flow layout and direction follow
// sampling.hpp: the flow at a reference pixel points into the neighbor.

/// How the Gaussian window around the hard argmax enters the softmax logits.
/// kMultiply: score * g / temperature. kLogAdd: score / temperature + log g.
enum class WindowMode { kMultiply, kLogAdd };

std::string to_string(WindowMode mode);
WindowMode parse_window_mode(const std::string& s);

struct SoftArgmaxOptions {
  double temperature = 0.03;
  int window = 5;  // odd; candidates farther than window/2 on either axis drop out
  double sigma = 2.0;
  WindowMode mode = WindowMode::kLogAdd;
};

/// Registers the quarter-resolution extractor: four k x k convs with strides
/// 2, 2, 1, 1 and widths c1/2, c1, c1, c1.
template <typename T>
void add_semantic_features(ParamStore<T>& store, const std::string& prefix,
                           int c1, std::mt19937_64& rng, double slope,
                           int kernel = 5);

/// (n, 3, h, w) frame in [0, 1] -> (n, c1, h/4, w/4), unit L2 norm per
/// location (or exactly zero). The frame is low-passed by a fixed Gaussian
/// (sigma 1.5) before the strided convs to limit aliasing.
template <typename T>
Var<T> semantic_features(Tape<T>& tape, ParamStore<T>& store,
                         const std::string& prefix, Var<T> frame, T slope);

/// All-pairs inner products. Output (n, h*w, h, w) with
/// out[b, j, i] = <ref[b, :, i], nbr[b, :, j]> for flattened locations i, j.
template <typename T>
Var<T> cost_volume(Var<T> ref, Var<T> nbr);

/// Displacement of the best-scoring neighbor location per reference pixel,
/// (n, 2, h, w). Ties go to the smallest displacement, then the lowest index.
template <typename T>
Tensor4<T> hard_argmax_flow(const Tensor4<T>& volume);

/// Kernel soft-argmax: the expected displacement under a temperature softmax
/// restricted to a Gaussian-weighted window around the hard argmax. The
/// argmax position is treated as a constant for differentiation.
template <typename T>
Var<T> soft_argmax_flow(Var<T> volume, const SoftArgmaxOptions& opts = {});

/// Nearest-neighbor x`factor` replication with values scaled by `factor`.
template <typename T>
Var<T> flow_upsample(Var<T> coarse, int factor = 4);

struct DenseBlockConfig {
  int layers = 4;
  int growth = 32;
};

/// Registers the refinement dense block for `channels`-wide features.
template <typename T>
void add_refine_flow(ParamStore<T>& store, const std::string& prefix,
                     int channels, const DenseBlockConfig& cfg,
                     std::mt19937_64& rng, double slope);

/// initial + residual, the residual computed by a dense block over
/// [ref_feat, warped_nbr_feat, initial]. The output projection starts at zero.
template <typename T>
Var<T> refine_flow(Tape<T>& tape, ParamStore<T>& store,
                   const std::string& prefix, Var<T> ref_feat,
                   Var<T> warped_nbr_feat, Var<T> initial, T slope);

template <typename T>
struct MfeOutput {
  Var<T> coarse;   // quarter resolution, quarter-resolution pixels
  Var<T> initial;  // feature resolution, before refinement
  Var<T> fine;     // feature resolution, refined
};

/// Parameter prefixes used by mfe().
struct MfeNames {
  std::string semantic = "sem";
  std::string refine = "refine";
};

/// Flow from precomputed semantic features. Skips refinement when
/// `refine` is false (fine == initial).
template <typename T>
MfeOutput<T> mfe_from_semantics(Tape<T>& tape, ParamStore<T>& store,
                                const MfeNames& names, Var<T> ref_sem,
                                Var<T> nbr_sem, Var<T> ref_feat,
                                Var<T> nbr_feat, const SoftArgmaxOptions& opts,
                                T slope, bool refine = true);

/// Full pipeline from frames. Frame dims must be divisible by 4.
template <typename T>
MfeOutput<T> mfe(Tape<T>& tape, ParamStore<T>& store, const MfeNames& names,
                 Var<T> ref_frame, Var<T> nbr_frame, Var<T> ref_feat,
                 Var<T> nbr_feat, const SoftArgmaxOptions& opts, T slope,
                 bool refine = true);

}  // namespace flowdeform
