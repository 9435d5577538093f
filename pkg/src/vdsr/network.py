"""The very deep residual network: d stacked 3x3 conv layers, ReLU between
them, and a single global addition of the input to the predicted residual."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensor import (ConvParams, add, check_4d, conv2d_backward, conv2d_forward, relu_backward,
                     relu_forward)


def receptive_field(depth):
    """Side length of the square input region that influences one output pixel."""
    return 2 * depth + 1


@dataclass
class VdsrModel:
    layers: list

    def __post_init__(self):
        if len(self.layers) < 2:
            raise ShapeError("a model needs at least 2 layers")
        if self.layers[0].in_channels != 1 or self.layers[-1].out_channels != 1:
            raise ShapeError("model must map 1 channel to 1 channel")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_channels != nxt.in_channels:
                raise ShapeError("consecutive layers disagree on channel count")

    @classmethod
    def zeros(cls, depth=20, width=64, dtype=np.float32):
        chans = [1] + [width] * (depth - 1) + [1]
        if depth < 2:
            raise ShapeError(f"depth must be >= 2, got {depth}")
        return cls([ConvParams(np.zeros((co, ci, 3, 3), dtype), np.zeros(co, dtype))
                    for ci, co in zip(chans[:-1], chans[1:])])

    @property
    def depth(self):
        return len(self.layers)

    @property
    def width(self):
        return self.layers[0].out_channels

    @property
    def dtype(self):
        return self.layers[0].weight.dtype

    def parameters(self):
        """Flat list [w1, b1, w2, b2, ...] of the live parameter arrays."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self):
        return VdsrModel([layer.copy() for layer in self.layers])

    def astype(self, dtype):
        return VdsrModel([ConvParams(l.weight.astype(dtype), l.bias.astype(dtype))
                          for l in self.layers])


def he_std(in_channels):
    return float(np.sqrt(2.0 / (9 * in_channels)))


def init_he(model, seed):
    """Return a copy of ``model`` with Gaussian weights of std sqrt(2 / (9 * in_ch)) and zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    for layer in model.layers:
        w = rng.standard_normal(layer.weight.shape) * he_std(layer.in_channels)
        layers.append(ConvParams(w.astype(model.dtype), np.zeros_like(layer.bias)))
    return VdsrModel(layers)


@dataclass
class ForwardTrace:
    """Per-layer tensors kept for backprop.

    ``inputs[k]`` is what layer ``k`` consumed (the post-activation of layer
    ``k - 1``) and ``preacts[k]`` is its raw conv output.
    """

    inputs: list = field(default_factory=list)
    preacts: list = field(default_factory=list)


def forward(model, ilr):
    """Predict the residual image for a batch of luminance inputs of shape (n, 1, h, w)."""
    check_4d(ilr, "ilr")
    if ilr.shape[1] != 1:
        raise ShapeError(f"network input must have 1 channel, got {ilr.shape[1]}")
    trace = ForwardTrace()
    x = ilr.astype(model.dtype, copy=False)
    last = model.depth - 1
    for k, layer in enumerate(model.layers):
        trace.inputs.append(x)
        z = conv2d_forward(x, layer)
        trace.preacts.append(z)
        x = z if k == last else relu_forward(z)
    return x, trace


def reconstruct(ilr, residual):
    """HR estimate = ILR + residual. No clamping here; that happens at export."""
    return add(ilr, residual)


def predict(model, ilr, residual_mode=True):
    """Network output in image space: ILR + f(ILR), or f(ILR) for a non-residual model."""
    out, _ = forward(model, ilr)
    return reconstruct(ilr.astype(out.dtype, copy=False), out) if residual_mode else out


def backward(model, trace, grad_out):
    """Parameter gradients given dL/d(network output); returns [(gw, gb), ...] per layer."""
    grads = [None] * model.depth
    g = grad_out
    last = model.depth - 1
    for k in range(last, -1, -1):
        if k != last:
            g = relu_backward(g, trace.preacts[k])
        gx, gw, gb = conv2d_backward(g, trace.inputs[k], model.layers[k], need_input_grad=k > 0)
        grads[k] = (gw, gb)
        g = gx
    return grads


def loss_and_grad(model, ilr, hr, residual_mode=True):
    """Mean squared error, halved, and its exact gradient for every weight and bias.

    The loss is ``sum((target - f(ilr))**2) / (2 * n * h * w)`` where the
    target is ``hr - ilr`` in residual mode and ``hr`` otherwise.

    Returns
    -------
    loss : float
    grads : list of (grad_weight, grad_bias) per layer
    """
    if ilr.shape != hr.shape:
        raise ShapeError(f"ilr shape {ilr.shape} != hr shape {hr.shape}")
    out, trace = forward(model, ilr)
    target = hr - ilr if residual_mode else hr
    diff = out - target.astype(out.dtype, copy=False)
    n, _, h, w = ilr.shape
    count = n * h * w
    loss = float(np.sum(diff.astype(np.float64) ** 2)) / (2 * count)
    grads = backward(model, trace, diff / out.dtype.type(count))
    return loss, grads
