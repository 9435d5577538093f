import numpy as np
import pytest

from vdsr import network
from vdsr.errors import ShapeError
from vdsr.gradcheck import gradcheck
from vdsr.network import (VdsrModel, forward, he_std, init_he, loss_and_grad, receptive_field,
                          reconstruct)
from vdsr.tensor import ConvParams


def test_architecture_layout():
    m = VdsrModel.zeros(depth=20, width=64)
    assert m.depth == 20 and m.width == 64
    assert m.layers[0].weight.shape == (64, 1, 3, 3)
    assert all(l.weight.shape == (64, 64, 3, 3) for l in m.layers[1:-1])
    assert m.layers[-1].weight.shape == (1, 64, 3, 3)
    assert receptive_field(20) == 41
    with pytest.raises(ShapeError):
        VdsrModel.zeros(depth=1)


def test_he_target_std_and_determinism():
    assert he_std(64) == pytest.approx(np.sqrt(2 / 576))
    assert he_std(64) == pytest.approx(0.0589, abs=1e-4)
    a = init_he(VdsrModel.zeros(5, 16), seed=7)
    b = init_he(VdsrModel.zeros(5, 16), seed=7)
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.weight, lb.weight)
        assert not la.bias.any()


def test_he_empirical_std():
    m = init_he(VdsrModel.zeros(20, 64, np.float64), seed=0)
    pooled = np.concatenate([l.weight.ravel() for l in m.layers[1:4]])
    assert pooled.size >= 10**5
    assert abs(pooled.std() / he_std(64) - 1) < 0.01
    assert abs(pooled.mean()) < 0.01 * he_std(64)
    for layer in m.layers:
        if layer.weight.size >= 1000:
            assert abs(layer.weight.std() / he_std(layer.in_channels) - 1) < 0.1


def test_zero_model_predicts_zero():
    x = np.random.default_rng(0).random((2, 1, 7, 7)).astype(np.float32)
    out, trace = forward(VdsrModel.zeros(4, 8), x)
    assert out.shape == x.shape and not out.any()
    assert len(trace.inputs) == len(trace.preacts) == 4


def test_depth2_hand_computed_map():
    # channel 0: relu(2x); channel 1: relu(0.5 - x); output: 1*ch0 + 3*ch1 - 0.1
    w1 = np.zeros((2, 1, 3, 3))
    w1[0, 0, 1, 1] = 2.0
    w1[1, 0, 1, 1] = -1.0
    w2 = np.zeros((1, 2, 3, 3))
    w2[0, 0, 1, 1] = 1.0
    w2[0, 1, 1, 1] = 3.0
    model = VdsrModel([ConvParams(w1, np.array([0.0, 0.5])), ConvParams(w2, np.array([-0.1]))])
    x = np.random.default_rng(1).random((1, 1, 5, 6))
    expected = 2 * x + 3 * np.maximum(0.5 - x, 0) - 0.1
    out, _ = forward(model, x)
    np.testing.assert_allclose(out, expected, atol=1e-14)


@pytest.mark.parametrize("depth", [2, 3, 20])
@pytest.mark.parametrize("side", [1, 7, 41])
def test_output_shape_matches_input(depth, side):
    m = init_he(VdsrModel.zeros(depth, 2), seed=0)
    out, _ = forward(m, np.ones((1, 1, side, side), np.float32))
    assert out.shape == (1, 1, side, side)


def test_channel_mismatch():
    with pytest.raises(ShapeError):
        forward(VdsrModel.zeros(2, 2), np.zeros((1, 2, 4, 4)))


def test_reconstruct():
    rng = np.random.default_rng(2)
    ilr, y = rng.random((2, 1, 1, 4, 4))
    np.testing.assert_array_equal(reconstruct(ilr, np.zeros_like(ilr)), ilr)
    np.testing.assert_allclose(reconstruct(ilr, y - ilr), y, atol=1e-15)
    with pytest.raises(ShapeError):
        reconstruct(ilr, y[..., :3])


def test_reconstruct_not_clamped():
    out = reconstruct(np.full((1, 1, 2, 2), 0.9), np.full((1, 1, 2, 2), 0.3))
    assert np.all(out > 1)


def test_zero_model_loss_is_half_mean_square_residual():
    rng = np.random.default_rng(3)
    ilr = rng.random((2, 1, 6, 6))
    hr = rng.random((2, 1, 6, 6))
    loss, _ = loss_and_grad(VdsrModel.zeros(3, 4, np.float64), ilr, hr)
    assert loss == pytest.approx(0.5 * np.mean((hr - ilr) ** 2), rel=1e-12)


def test_perfect_prediction_has_zero_loss_and_grads():
    rng = np.random.default_rng(4)
    model = init_he(VdsrModel.zeros(3, 4, np.float64), seed=4)
    ilr = rng.random((1, 1, 6, 6))
    residual, _ = forward(model, ilr)
    loss, grads = loss_and_grad(model, ilr, ilr + residual)
    assert loss == pytest.approx(0, abs=1e-30)
    assert all(np.allclose(gw, 0, atol=1e-15) and np.allclose(gb, 0, atol=1e-15) for gw, gb in grads)


def test_modes_coincide_for_zero_input():
    model = init_he(VdsrModel.zeros(3, 4, np.float64), seed=5)
    for layer in model.layers:
        layer.bias[:] = 0.05
    hr = np.random.default_rng(5).random((1, 1, 5, 5))
    zero = np.zeros_like(hr)
    la, ga = loss_and_grad(model, zero, hr, residual_mode=True)
    lb, gb = loss_and_grad(model, zero, hr, residual_mode=False)
    assert la == lb
    for (wa, ba), (wb, bb) in zip(ga, gb):
        np.testing.assert_array_equal(wa, wb)


def test_loss_nonnegative():
    rng = np.random.default_rng(6)
    for seed in range(5):
        model = init_he(VdsrModel.zeros(3, 4, np.float64), seed=seed)
        loss, _ = loss_and_grad(model, rng.random((1, 1, 5, 5)), rng.random((1, 1, 5, 5)),
                                residual_mode=bool(seed % 2))
        assert loss > 0


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        loss_and_grad(VdsrModel.zeros(2, 2), np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 4, 5)))


@pytest.mark.parametrize("residual_mode", [True, False])
def test_depth3_gradients_match_finite_differences(residual_mode):
    result = gradcheck(depth=3, seed=11, residual_mode=residual_mode)
    assert result.max_rel_error < 1e-5
    assert result.checked > 0.95 * (result.checked + result.skipped)


@pytest.mark.parametrize("depth", [2, 5, 10])
def test_end_to_end_gradcheck_8x8(depth):
    assert gradcheck(depth=depth, seed=depth, size=8).passed


def test_sign_flipped_backward_fails_gradcheck():
    def sabotaged(model, ilr, hr, residual_mode=True):
        loss, grads = network.loss_and_grad(model, ilr, hr, residual_mode)
        gw, gb = grads[0]
        grads[0] = (-gw, gb)
        return loss, grads

    assert not gradcheck(depth=3, seed=0, loss_and_grad=sabotaged).passed


@pytest.mark.parametrize("depth", [2, 4])
def test_receptive_field_locality(depth):
    rng = np.random.default_rng(depth)
    model = init_he(VdsrModel.zeros(depth, 3, np.float64), seed=depth)
    for layer in model.layers:
        layer.bias[:] = 0.1
    size = 4 * depth + 5
    x = rng.random((1, 1, size, size))
    cy = cx = size // 2
    base, _ = forward(model, x)
    half = receptive_field(depth) // 2
    for y in range(size):
        for xx in range(size):
            inside = abs(y - cy) <= half and abs(xx - cx) <= half
            if inside:
                continue
            x2 = x.copy()
            x2[0, 0, y, xx] += 1.0
            out, _ = forward(model, x2)
            assert out[0, 0, cy, cx] == base[0, 0, cy, cx]
    # a pixel on the window edge does influence the centre
    x2 = x.copy()
    x2[0, 0, cy + half, cx] += 1.0
    assert forward(model, x2)[0][0, 0, cy, cx] != base[0, 0, cy, cx]


def test_batched_numeric_gradient_matches_per_coordinate_oracle():
    from oracles import central_diff
    from vdsr.gradcheck import _numeric_layer

    rng = np.random.default_rng(21)
    model = init_he(VdsrModel.zeros(3, 3, np.float64), 21)
    for layer in model.layers:
        layer.bias[:] = rng.uniform(-0.05, 0.05, layer.bias.shape)
    ilr = rng.random((2, 1, 5, 6))
    hr = rng.random((2, 1, 5, 6))
    _, trace = forward(model, ilr)
    loss = lambda: loss_and_grad(model, ilr, hr)[0]
    for k, layer in enumerate(model.layers):
        numeric, valid = _numeric_layer(model, k, trace, hr - ilr, 1e-6, chunk=7)
        ref = np.concatenate([central_diff(loss, layer.weight).ravel(), central_diff(loss, layer.bias).ravel()])
        assert valid.any()
        np.testing.assert_allclose(numeric[valid], ref[valid], rtol=1e-7, atol=1e-10)


def test_gradcheck_skips_kink_crossing_coordinates():
    from vdsr.gradcheck import check_model_gradients

    model = VdsrModel.zeros(2, 1, np.float64)
    model.layers[0].weight[:] = 1.0
    model.layers[1].weight[:] = 1.0
    ilr = np.zeros((1, 1, 4, 4))  # every pre-activation sits exactly at the kink
    worst, checked, skipped = check_model_gradients(model, ilr, ilr + 0.1)
    assert skipped > 0
    assert worst < 1e-5
