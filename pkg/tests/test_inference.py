import numpy as np
from hypothesis import given, settings, strategies as st

from vdsr.data import bicubic_resize, make_ilr
from vdsr.inference import (bicubic_upscale_image, output_size, super_resolve_image,
                            super_resolve_y)
from vdsr.network import VdsrModel, init_he


def _rgb(h, w, seed=0):
    return np.random.default_rng(seed).integers(0, 256, (h, w, 3), dtype=np.uint8)


def test_zero_model_returns_bicubic_exactly():
    ilr = make_ilr(np.random.default_rng(1).random((30, 26)), 3)
    out = super_resolve_y(VdsrModel.zeros(4, 3), ilr)
    assert np.array_equal(out, ilr)


def test_zero_model_image_equals_bicubic_image():
    px = _rgb(20, 17)
    assert np.array_equal(super_resolve_image(VdsrModel.zeros(3, 2), px, 2.5), bicubic_upscale_image(px, 2.5))


def test_fractional_scale_output_size():
    out = super_resolve_image(VdsrModel.zeros(2, 2), _rgb(80, 100), 2.5)
    assert out.shape == (200, 250, 3) and out.dtype == np.uint8


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 60), st.integers(1, 60), st.floats(1.01, 4.0))
def test_output_size_rounds(h, w, s):
    oh, ow = output_size(h, w, s)
    assert abs(oh - h * s) <= 0.5 and abs(ow - w * s) <= 0.5


def test_grayscale_input_stays_grayscale():
    g = np.random.default_rng(2).integers(0, 256, (12, 10), dtype=np.uint8)
    out = bicubic_upscale_image(g, 2)
    assert out.shape == (24, 20)


def test_non_residual_mode_uses_output_directly():
    ilr = np.full((9, 9), 0.4)
    model = VdsrModel.zeros(2, 2, np.float64)
    model.layers[-1].bias[:] = 0.25
    assert np.allclose(super_resolve_y(model, ilr, residual_mode=False), 0.25)
    assert np.allclose(super_resolve_y(model, ilr, residual_mode=True), 0.65)


def test_inference_is_deterministic():
    model = init_he(VdsrModel.zeros(3, 4), 5)
    px = _rgb(14, 11, seed=7)
    assert np.array_equal(super_resolve_image(model, px, 3), super_resolve_image(model, px, 3))


def test_upscale_matches_resizer():
    y = np.random.default_rng(3).random((10, 8))
    ref = bicubic_resize(y, 20, 16, scale=2)
    from vdsr.inference import upscale_planes
    from vdsr.data import ImageY
    assert np.array_equal(upscale_planes(ImageY(y), 2).y, ref)
