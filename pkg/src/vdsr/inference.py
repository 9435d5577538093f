"""Applying a trained model to whole images at arbitrary scale factors."""

import math

import numpy as np

from . import network
from .data import ImageY, bicubic_resize, rgb_to_y, to_uint8, y_to_rgb


def super_resolve_y(model, ilr, residual_mode=True):
    """Network estimate for one ILR luminance plane (float64, unclamped).

    The residual is added to the float64 ILR, so a zero-residual model
    returns the bicubic input bit for bit.
    """
    out, _ = network.forward(model, np.asarray(ilr)[None, None].astype(model.dtype))
    out = out[0, 0].astype(np.float64)
    return ilr + out if residual_mode else out


def output_size(h, w, scale):
    return int(math.floor(h * scale + 0.5)), int(math.floor(w * scale + 0.5))


def upscale_planes(img, scale):
    """Bicubic-upscale every plane of an :class:`ImageY` to ``round(dim * scale)``."""
    oh, ow = output_size(*img.shape, scale)
    up = lambda p: None if p is None else bicubic_resize(p, oh, ow, scale=scale)
    return ImageY(up(img.y), up(img.cb), up(img.cr))


def super_resolve_image(model, pixels, scale, residual_mode=True):
    """8-bit image in, 8-bit image out: network on luminance, bicubic on chroma."""
    ilr = upscale_planes(rgb_to_y(pixels), scale)
    if model is not None:
        ilr.y = super_resolve_y(model, ilr.y, residual_mode)
    return to_uint8(y_to_rgb(ilr))


def bicubic_upscale_image(pixels, scale):
    """The same colour pipeline with no network: the baseline output."""
    return super_resolve_image(None, pixels, scale)
