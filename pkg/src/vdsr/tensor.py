"""Dense (batch, channel, height, width) arrays and the differentiable
primitives of the network: 3x3 same-size convolution, ReLU and addition.

Tensors are plain C-contiguous :class:`numpy.ndarray` objects. Every
function here is pure and works for any floating dtype, so gradient checks
run the training code paths at float64.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

KERNEL = 3
PAD = 1


def check_4d(x, name="tensor"):
    if x.ndim != 4 or min(x.shape) < 1:
        raise ShapeError(f"{name} must be 4-D with all dims >= 1, got shape {x.shape}")
    return x


@dataclass
class ConvParams:
    """Filters of shape (out_ch, in_ch, 3, 3) and one bias per filter."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weight.ndim != 4 or self.weight.shape[2:] != (KERNEL, KERNEL):
            raise ShapeError(f"conv weight must be (out, in, 3, 3), got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match {self.weight.shape[0]} filters"
            )

    @property
    def out_channels(self):
        return self.weight.shape[0]

    @property
    def in_channels(self):
        return self.weight.shape[1]

    def copy(self):
        return ConvParams(self.weight.copy(), self.bias.copy())


def _columns(x):
    """Lower a zero-padded input to a (n*h*w, c*9) patch matrix."""
    n, c, h, w = x.shape
    padded = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    windows = sliding_window_view(padded, (KERNEL, KERNEL), axis=(2, 3))
    # (n, c, h, w, ky, kx) -> (n, h, w, c, ky, kx)
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * KERNEL * KERNEL)


def _conv(x, weight, bias=None):
    n, _, h, w = x.shape
    co = weight.shape[0]
    out = _columns(x) @ weight.reshape(co, -1).T
    if bias is not None:
        out += bias
    return np.ascontiguousarray(out.reshape(n, h, w, co).transpose(0, 3, 1, 2))


def conv2d_forward(x, params):
    """Stride-1 3x3 convolution with one pixel of zero padding.

    ``out[n, o, y, x] = bias[o] + sum_{i,dy,dx} w[o, i, dy, dx] * xpad[n, i, y+dy, x+dx]``
    """
    check_4d(x, "conv input")
    if x.shape[1] != params.in_channels:
        raise ShapeError(
            f"input has {x.shape[1]} channels but kernel expects {params.in_channels}"
        )
    return _conv(x, params.weight, params.bias)


def conv2d_backward(grad_out, x, params, need_input_grad=True):
    """Gradients of :func:`conv2d_forward` with respect to input, weights and bias.

    Parameters
    ----------
    grad_out : ndarray, shape (n, out_ch, h, w)
        Upstream gradient.
    x : ndarray, shape (n, in_ch, h, w)
        The forward input.
    params : ConvParams
    need_input_grad : bool
        The first layer of a network can skip the input gradient.

    Returns
    -------
    grad_input, grad_weight, grad_bias
        ``grad_input`` is None when ``need_input_grad`` is False.
    """
    check_4d(x, "conv input")
    n, ci, h, w = x.shape
    co = params.out_channels
    if ci != params.in_channels:
        raise ShapeError(f"input has {ci} channels but kernel expects {params.in_channels}")
    if grad_out.shape != (n, co, h, w):
        raise ShapeError(f"grad_out shape {grad_out.shape} != forward output {(n, co, h, w)}")

    g = grad_out.transpose(0, 2, 3, 1).reshape(n * h * w, co)
    grad_weight = (g.T @ _columns(x)).reshape(params.weight.shape)
    grad_bias = g.sum(axis=0)
    grad_input = None
    if need_input_grad:
        # transposed same-size conv == same-size conv with flipped, channel-swapped kernel
        flipped = np.ascontiguousarray(params.weight[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        grad_input = _conv(np.ascontiguousarray(grad_out), flipped)
    return grad_input, grad_weight, grad_bias


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    """Pass ``grad_out`` where ``x > 0``; the subgradient at exactly 0 is 0."""
    if grad_out.shape != x.shape:
        raise ShapeError(f"relu grad shape {grad_out.shape} != input shape {x.shape}")
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}")
    return a + b
