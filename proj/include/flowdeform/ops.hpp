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

#include <vector>

#include "flowdeform/autograd.hpp"

namespace flowdeform {

// Differentiable layer primitives. Every op records its result on the tape of
// its first argument; all arguments must live on the same tape.

/// 2-D convolution with zero padding. `weight` is (c_out, c_in, k, k) with k
/// odd, `bias` is (1, c_out, 1, 1) or an invalid Var for no bias.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, int stride,
              int padding);

template <typename T>
Var<T> leaky_relu(Var<T> input, T slope);

template <typename T>
Var<T> sigmoid(Var<T> input);

/// Concatenates along channels, preserving argument order.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& inputs);

/// Channels [begin, begin + count).
template <typename T>
Var<T> slice_channels(Var<T> input, int begin, int count);

/// Repeats the channel block `times` times: (n,c,h,w) -> (n,c*times,h,w).
template <typename T>
Var<T> tile_channels(Var<T> input, int times);

/// Replicates each pixel into a scale x scale block.
template <typename T>
Var<T> upsample_nearest(Var<T> input, int scale);

/// Sub-pixel rearrangement (n, c*r*r, h, w) -> (n, c, h*r, w*r) with
/// out[n, c, r*y + a, r*x + b] = in[n, c*r*r + a*r + b, y, x].
template <typename T>
Var<T> pixel_shuffle(Var<T> input, int r);

/// Exact inverse of pixel_shuffle.
template <typename T>
Var<T> pixel_unshuffle(Var<T> input, int r);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);

/// x (n,c,h,w) times a per-pixel weight map w (n,1,h,w).
template <typename T>
Var<T> mul_channel_broadcast(Var<T> x, Var<T> w);

/// Per-pixel mean over channels of a*b, shape (n,1,h,w).
template <typename T>
Var<T> channel_mean_product(Var<T> a, Var<T> b);

/// Softmax across the channel axis at every pixel.
template <typename T>
Var<T> softmax_channels(Var<T> input);

/// Scales every pixel's channel vector to unit L2 norm; vectors with norm
/// below `eps` are divided by `eps` instead (zero stays zero).
template <typename T>
Var<T> l2_normalize_channels(Var<T> input, T eps);

/// Sum of all elements, shape (1,1,1,1).
template <typename T>
Var<T> sum_all(Var<T> input);

}  // namespace flowdeform
