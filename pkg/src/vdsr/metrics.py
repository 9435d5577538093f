"""PSNR/SSIM scoring on luminance and the benchmark loop built on them."""

import csv
import io
import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import ImageY, make_ilr, quantize
from .errors import ConfigError, RangeError, ShapeError
from .inference import super_resolve_y

log = logging.getLogger(__name__)

#: PSNR of identical images. Never folded into averages.
PSNR_IDENTICAL = math.inf


def crop_border(img, pixels):
    """Drop ``pixels`` rows and columns from every side."""
    h, w = img.shape[:2]
    if pixels < 0 or 2 * pixels >= min(h, w):
        raise RangeError(f"cannot crop {pixels} px from a {h}x{w} image")
    if pixels == 0:
        return img
    return img[pixels:h - pixels, pixels:w - pixels]


def psnr(a, b, peak=1.0):
    """10 * log10(peak**2 / MSE) in dB; :data:`PSNR_IDENTICAL` when MSE is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_kernel_1d(size=11, sigma=1.5):
    x = np.arange(size) - size // 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    rows = sliding_window_view(img, len(g), axis=0) @ g
    return sliding_window_view(rows, len(g), axis=1) @ g


def ssim(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Single-scale SSIM with a Gaussian window, averaged over all full windows."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise RangeError(f"image {a.shape} is smaller than the {window}x{window} window")
    g = gaussian_kernel_1d(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class ImageRecord:
    image: str
    scale: float
    psnr_db: float
    ssim: float
    seconds: float


@dataclass
class EvalReport:
    records: list = field(default_factory=list)
    dataset: str = ""

    def scales(self):
        return sorted({r.scale for r in self.records})

    def means(self):
        """{scale: (mean psnr, mean ssim, mean seconds)}.

        Infinite PSNRs (identical images) are left out of the PSNR mean; a
        scale whose every PSNR is infinite reports :data:`PSNR_IDENTICAL`.
        """
        groups = defaultdict(list)
        for r in self.records:
            groups[r.scale].append(r)
        out = {}
        for scale, recs in sorted(groups.items()):
            finite = [r.psnr_db for r in recs if math.isfinite(r.psnr_db)]
            if len(finite) < len(recs):
                log.warning("%d identical image(s) at x%g excluded from the PSNR mean",
                            len(recs) - len(finite), scale)
            mean_psnr = float(np.mean(finite)) if finite else PSNR_IDENTICAL
            out[scale] = (mean_psnr, float(np.mean([r.ssim for r in recs])),
                          float(np.mean([r.seconds for r in recs])))
        return out

    def mean_psnr(self, scale):
        return self.means()[float(scale)][0]

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["image", "scale", "psnr_db", "ssim", "seconds"])
        for r in self.records:
            writer.writerow([r.image, f"{r.scale:g}", f"{r.psnr_db:.4f}", f"{r.ssim:.6f}",
                             f"{r.seconds:.4f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def format_table(self, method="VDSR"):
        name = self.dataset or "dataset"
        head = f"{'Dataset':<10} {'Scale':<6} {method + ' PSNR/SSIM/time':>28}"
        lines = [head, "-" * len(head)]
        for scale, (p, s, t) in self.means().items():
            lines.append(f"{name:<10} {'x' + format(scale, 'g'):<6} {p:>14.2f}/{s:.4f}/{t:.2f}")
        return "\n".join(lines)


def score(result, truth, crop):
    """Crop, quantize to 8 bits and compute (psnr, ssim) of a luminance estimate."""
    r = quantize(crop_border(result, crop))
    t = quantize(crop_border(truth, crop))
    return psnr(r, t), ssim(r, t)


def benchmark_run(model, dataset, scales, crop=None, residual_mode=True, name=""):
    """Score ``model`` on ``dataset`` (``[(name, ImageY or 2-D array)]``) at each scale.

    For every image: make the ILR, predict, reconstruct, crop ``crop``
    pixels per side (default: the scale factor, rounded up), quantize and
    score. ``seconds`` times the network pass only.
    """
    if not dataset:
        raise ConfigError("benchmark dataset is empty")
    report = EvalReport(dataset=name)
    for scale in scales:
        scale = float(scale)
        px = int(math.ceil(scale)) if crop is None else int(crop)
        for img_name, img in dataset:
            hr = img.y if isinstance(img, ImageY) else np.asarray(img, dtype=np.float64)
            ilr = make_ilr(hr, scale)
            t0 = time.perf_counter()
            sr = super_resolve_y(model, ilr, residual_mode)
            seconds = time.perf_counter() - t0
            p, s = score(sr, hr, px)
            report.records.append(ImageRecord(img_name, scale, p, s, seconds))
    return report
