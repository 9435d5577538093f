"""Finite-difference verification of the network's analytic gradients."""

from dataclasses import dataclass

import numpy as np

from . import network
from .network import VdsrModel, init_he
from .tensor import conv2d_forward, relu_forward


@dataclass
class GradcheckResult:
    depth: int
    seed: int
    max_rel_error: float
    checked: int
    skipped: int

    @property
    def passed(self):
        return self.max_rel_error < 1e-5


def _tail(model, k, z):
    """Run layers ``k+1..`` on stacked layer-``k`` pre-activations; return output and ReLU masks."""
    last = model.depth - 1
    masks = []
    for j in range(k, last):
        masks.append(z > 0)
        z = conv2d_forward(relu_forward(z), model.layers[j + 1])
    return z, masks


def _directions(x, layer):
    """d(pre-activation)/d(parameter) for every weight then every bias of ``layer``.

    Yields ``(channel, plane)``: the parameter only moves output channel
    ``channel``, by ``plane`` (shape n x h x w) per unit change.
    """
    n, _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cout, cin = layer.weight.shape[:2]
    for o in range(cout):
        for i in range(cin):
            for dy in range(3):
                for dx in range(3):
                    yield o, xp[:, i, dy:dy + h, dx:dx + w]
    ones = np.ones((n, h, w), dtype=x.dtype)
    for o in range(cout):
        yield o, ones


def _numeric_layer(model, k, trace, target, step, chunk):
    """Central differences of the loss for every parameter of layer ``k``.

    The loss is linear in a layer's parameters up to that layer's output, so
    each perturbed copy of the pre-activation is built directly and all copies
    run through the remaining layers as one batch.
    Returns the numeric gradient and a mask of coordinates whose perturbation
    left every ReLU pattern unchanged.
    """
    base = trace.preacts[k]
    n, _, h, w = base.shape
    _, base_masks = _tail(model, k, base)
    dirs = list(_directions(trace.inputs[k], model.layers[k]))
    numeric = np.empty(len(dirs))
    valid = np.empty(len(dirs), dtype=bool)
    for lo in range(0, len(dirs), chunk):
        part = dirs[lo:lo + chunk]
        z = np.repeat(base[None], 2 * len(part), axis=0)
        for c, (o, plane) in enumerate(part):
            z[2 * c, :, o] += step * plane
            z[2 * c + 1, :, o] -= step * plane
        out, masks = _tail(model, k, z.reshape(-1, *base.shape[1:]))
        diff = out.reshape(2 * len(part), n, 1, h, w) - target
        losses = np.sum(diff ** 2, axis=(1, 2, 3, 4)) / (2 * n * h * w)
        same = np.ones(2 * len(part), dtype=bool)
        for m, m0 in zip(masks, base_masks):
            same &= np.all(m.reshape(2 * len(part), *m0.shape) == m0, axis=tuple(range(1, m0.ndim + 1)))
        numeric[lo:lo + len(part)] = (losses[0::2] - losses[1::2]) / (2 * step)
        valid[lo:lo + len(part)] = same[0::2] & same[1::2]
    return numeric, valid


def check_model_gradients(model, ilr, hr, residual_mode=True, step=1e-6,
                          loss_and_grad=network.loss_and_grad, chunk=256):
    """Compare analytic gradients against central differences of the loss.

    Coordinates whose perturbation flips any ReLU activation are skipped,
    since the difference quotient then straddles a kink. The error for each
    parameter tensor is ``max|analytic - numeric| / max|numeric|`` and the
    worst tensor is reported.
    """
    _, grads = loss_and_grad(model, ilr, hr, residual_mode)
    _, trace = network.forward(model, ilr)
    target = (hr - ilr if residual_mode else hr).astype(np.float64)
    worst = 0.0
    checked = skipped = 0
    for k, (layer, (gw, gb)) in enumerate(zip(model.layers, grads)):
        numeric, valid = _numeric_layer(model, k, trace, target, step, chunk)
        split = layer.weight.size
        for analytic, num, ok in ((gw, numeric[:split], valid[:split]),
                                  (gb, numeric[split:], valid[split:])):
            checked += int(ok.sum())
            skipped += int((~ok).sum())
            if not ok.any():
                continue
            a = analytic.reshape(-1)[ok]
            n = num[ok]
            scale = max(np.max(np.abs(n)), np.max(np.abs(a)), 1e-30)
            worst = max(worst, float(np.max(np.abs(a - n)) / scale))
    return worst, checked, skipped


def gradcheck(depth, seed, width=4, size=8, batch=2, residual_mode=True,
              loss_and_grad=network.loss_and_grad):
    """Gradient check of a small random float64 model."""
    rng = np.random.default_rng(seed)
    model = init_he(VdsrModel.zeros(depth, width, np.float64), seed)
    for layer in model.layers:
        layer.bias[:] = rng.uniform(-0.05, 0.05, layer.bias.shape)
    ilr = rng.random((batch, 1, size, size))
    hr = np.clip(ilr + 0.1 * rng.standard_normal(ilr.shape), 0, 1)
    err, checked, skipped = check_model_gradients(model, ilr, hr, residual_mode,
                                                  loss_and_grad=loss_and_grad)
    return GradcheckResult(depth, seed, err, checked, skipped)
