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

import os

import numpy as np
import pytest

import flowdeform as fd


def rng_array(shape, seed):
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=shape)


def test_warp_zero_flow_is_identity():
    x = rng_array((2, 3, 7, 9), 1)
    out = fd.warp(x, np.zeros((2, 2, 7, 9)))
    np.testing.assert_array_equal(out, x)


def test_warp_integer_shift_reads_the_displaced_pixel():
    x = rng_array((1, 1, 6, 8), 2)
    flow = np.zeros((1, 2, 6, 8))
    flow[0, 0] = 1.0
    out = fd.warp(x, flow)
    np.testing.assert_allclose(out[..., :-1], x[..., 1:], atol=1e-15)
    np.testing.assert_array_equal(out[..., -1], 0.0)


def test_pixel_shuffle_roundtrip():
    x = rng_array((1, 16, 4, 5), 3)
    np.testing.assert_array_equal(fd.pixel_unshuffle(fd.pixel_shuffle(x, 4), 4), x)


def test_matching_recovers_a_circular_shift():
    feat = rng_array((1, 8, 8, 8), 4) - 0.5
    feat /= np.linalg.norm(feat, axis=1, keepdims=True)
    nbr = np.roll(feat, shift=(1, 2), axis=(2, 3))
    flow = fd.hard_argmax_flow(fd.cost_volume(feat, nbr))
    dx = (flow[0, 0] - 2) % 8
    dy = (flow[0, 1] - 1) % 8
    assert np.all(dx == 0) and np.all(dy == 0)
    soft = fd.soft_argmax_flow(fd.cost_volume(feat, nbr), temperature=0.01)
    assert soft.shape == (1, 2, 8, 8)


def test_metrics():
    a = rng_array((1, 3, 16, 16), 5)
    assert fd.psnr(a, a) == 100.0
    assert fd.psnr(np.clip(a + 0.1, 0, 2), a) == pytest.approx(20.0)
    assert fd.ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    y = fd.rgb_to_y(np.zeros((1, 3, 1, 1)))
    assert y[0, 0, 0, 0] == pytest.approx(16.0 / 255.0)


def test_degrade_and_bicubic_shapes():
    hr = fd.make_texture(64, 64, 7)
    assert hr.shape == (1, 3, 64, 64)
    lr = fd.degrade(hr)
    assert lr.shape == (1, 3, 16, 16)
    assert fd.bicubic_upsample(lr, 4).shape == (1, 3, 64, 64)


def test_gradient_suite_passes():
    entries = fd.gradient_suite(seed=2)
    assert len(entries) == 13
    assert all(e["passed"] for e in entries), entries


def test_parameter_counts():
    assert fd.parameter_count("toy") == 141679
    assert 7.6e6 < fd.parameter_count("full") < 10.4e6
    with pytest.raises(ValueError):
        fd.parameter_count("huge")


def test_train_and_super_resolve(tmp_path):
    config = os.environ.get(
        "FLOWDEFORM_TOY_CONFIG",
        os.path.join(os.path.dirname(__file__), "..", "..", "configs", "toy.cfg"),
    )
    result = fd.train(config, str(tmp_path / "run"), steps=2, seed=3)
    assert len(result["losses"]) == 2
    assert np.isfinite(result["final_psnr"])
    model = fd.Model(str(tmp_path / "run" / "checkpoint"))
    assert model.num_frames == 7
    assert model.fdc_mode == "advanced"
    assert model.parameter_count == fd.parameter_count("toy")
    frames = [fd.degrade(fd.make_texture(64, 64, 11))] * 7
    out = model.super_resolve(frames)
    assert out.shape == (1, 3, 64, 64)
    with pytest.raises(ValueError):
        model.super_resolve(frames[:3])
