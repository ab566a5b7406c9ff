# Copyright (c) 2026 The flowdeform Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Flow-guided deformable alignment for video super-resolution.

Arrays are (n, c, h, w) float64 numpy arrays. Flow channel 0 is the x
displacement and channel 1 the y displacement, in pixels.
"""

from ._flowdeform import (
    Model,
    bicubic_upsample,
    bilinear_sample,
    cost_volume,
    degrade,
    flow_to_color,
    gradient_suite,
    hard_argmax_flow,
    make_texture,
    parameter_count,
    pixel_shuffle,
    pixel_unshuffle,
    psnr,
    rgb_to_y,
    soft_argmax_flow,
    ssim,
    train,
    warp,
)

__all__ = [
    "Model",
    "bicubic_upsample",
    "bilinear_sample",
    "cost_volume",
    "degrade",
    "flow_to_color",
    "gradient_suite",
    "hard_argmax_flow",
    "make_texture",
    "parameter_count",
    "pixel_shuffle",
    "pixel_unshuffle",
    "psnr",
    "rgb_to_y",
    "soft_argmax_flow",
    "ssim",
    "train",
    "warp",
]
