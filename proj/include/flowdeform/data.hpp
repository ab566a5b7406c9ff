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
#include <optional>
#include <random>
#include <vector>

#include "flowdeform/tensor.hpp"

namespace flowdeform {

// Synthetic video data and the blur + decimation degradation model.

/// Normalized 1-D Gaussian taps of odd length `size`.
std::vector<double> gaussian_kernel(double sigma, int size);

/// Separable Gaussian blur per channel with reflective padding (edge sample
/// not repeated).
template <typename T>
Tensor4<T> gaussian_blur(const Tensor4<T>& x, double sigma, int size);

/// Blur then keep every `factor`-th sample starting at index 0.
template <typename T>
Tensor4<T> degrade(const Tensor4<T>& hr, int factor = 4, double sigma = 1.6,
                   int size = 13);

template <typename T>
Tensor4<T> crop(const Tensor4<T>& x, int y0, int x0, int h, int w);

/// (1, 3, h, w) RGB texture in [0, 1]: multi-octave smooth noise, optionally
/// with hard-edged rectangles and discs on top. Pure function of the seed.
template <typename T>
Tensor4<T> make_texture(int h, int w, std::uint64_t seed, bool shapes = true);

enum class MotionModel { kGlobal, kObjects };

struct SynthSpec {
  std::uint64_t seed = 0;
  MotionModel motion = MotionModel::kGlobal;
  double min_disp = 0.0;  // low-resolution pixels per frame
  double max_disp = 2.0;
  int num_frames = 7;
  int lr_size = 32;
  int scale = 4;
  int objects = 2;  // moving patches for kObjects
  bool augment = true;
  /// Fixed direction of the global motion in radians; drawn uniformly if unset.
  std::optional<double> direction;
};

/// Mirror/transpose augmentation applied to an image or a flow field (flows
/// have their components permuted and negated to stay consistent).
struct Dihedral {
  bool flip_x = false;
  bool flip_y = false;
  bool transpose = false;
};

/// One training window. Flows are at low resolution and map the reference
/// frame into frame i, so warp(lr_frames[i], lr_flows[i]) ~ lr_frames[t].
template <typename T>
struct SynthSample {
  std::vector<Tensor4<T>> lr_frames;
  Tensor4<T> hr_reference;
  std::vector<Tensor4<T>> lr_flows;
  int reference_index = 0;
  Dihedral augmentation;  // transform applied to every tensor above
};

/// Draws a window from `canvas`. Per-frame motion has a magnitude uniform in
/// [min_disp, max_disp] and a uniform direction, rounded to whole
/// high-resolution pixels.
template <typename T>
SynthSample<T> synth_sequence(const Tensor4<T>& canvas, const SynthSpec& spec,
                              std::mt19937_64& rng);

/// Canvas size that fits any window drawn with `spec`.
int canvas_size(const SynthSpec& spec);

/// Deterministic bank of textures shared by all samples of a run.
template <typename T>
std::vector<Tensor4<T>> make_texture_bank(int count, int size, std::uint64_t seed);

template <typename T>
Tensor4<T> apply_dihedral(const Tensor4<T>& x, const Dihedral& d, bool is_flow);

}  // namespace flowdeform
