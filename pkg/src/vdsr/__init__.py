"""Single-image super-resolution with a very deep residual CNN, in numpy."""

from .data import ImageY, PatchSet, bicubic_resize, make_ilr, rgb_to_y, y_to_rgb
from .errors import (ConfigError, CorruptWeightsError, DivergenceError, RangeError, ShapeError,
                     VdsrError)
from .metrics import EvalReport, benchmark_run, psnr, ssim
from .network import VdsrModel, forward, init_he, loss_and_grad, receptive_field, reconstruct
from .optimizer import TrainConfig, clip_adjustable, lr_at, sgd_step

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "CorruptWeightsError", "DivergenceError", "EvalReport", "ImageY", "PatchSet",
    "RangeError", "ShapeError", "TrainConfig", "VdsrError", "VdsrModel", "benchmark_run",
    "bicubic_resize", "clip_adjustable", "forward", "init_he", "loss_and_grad", "lr_at", "make_ilr",
    "psnr", "receptive_field", "reconstruct", "rgb_to_y", "sgd_step", "ssim", "y_to_rgb",
]
