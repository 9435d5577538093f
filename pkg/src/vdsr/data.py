"""Image preparation: cubic resampling, BT.601 luminance, training patches
and mixed-scale mini-batches.

All intensities are floats on a [0, 1] scale; conversion to 8 bits happens
only when an image is written out.
"""

import hashlib
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, RangeError

log = logging.getLogger(__name__)

# Patch intensities are snapped to this grid so that ilr + (hr - ilr) == hr
# holds exactly in float32 for every value in [-2, 2].
PATCH_GRID = 2.0 ** -20

CACHE_FORMAT = 1


# -- resampling ---------------------------------------------------------------

def cubic_kernel(x, a=-0.5):
    x = np.abs(x)
    x2 = x * x
    x3 = x2 * x
    return np.where(x <= 1, (a + 2) * x3 - (a + 3) * x2 + 1,
                    np.where(x < 2, a * x3 - 5 * a * x2 + 8 * a * x - 4 * a, 0.0))


def _contributions(in_len, out_len, scale, antialias=True, edge="clamp"):
    """Source indices and normalized weights, one row per output sample."""
    widen = min(scale, 1.0) if antialias else 1.0
    support = 4.0 / widen
    centers = (np.arange(out_len) + 0.5) / scale - 0.5
    left = np.floor(centers - support / 2).astype(np.int64)
    taps = int(math.ceil(support)) + 2
    idx = left[:, None] + np.arange(taps)
    weights = widen * cubic_kernel((centers[:, None] - idx) * widen)
    weights /= weights.sum(axis=1, keepdims=True)
    if edge == "clamp":
        idx = np.clip(idx, 0, in_len - 1)
    elif edge == "reflect":
        period = np.concatenate([np.arange(in_len), np.arange(in_len - 1, -1, -1)])
        idx = period[np.mod(idx, 2 * in_len)]
    else:
        raise ConfigError(f"unknown edge mode {edge!r}")
    return idx, weights


def _resize_axis(img, out_len, scale, axis, antialias, edge):
    idx, weights = _contributions(img.shape[axis], out_len, scale, antialias, edge)
    moved = np.moveaxis(img, axis, 0)
    gathered = moved[idx]  # (out, taps, ...)
    w = weights.reshape(weights.shape + (1,) * (moved.ndim - 1))
    return np.moveaxis((gathered * w).sum(axis=1), 0, axis)


def bicubic_resize(img, out_h, out_w, scale=None, antialias=True, edge="clamp"):
    """Resize with the a = -0.5 cubic convolution kernel, height axis first.

    When shrinking, the kernel is stretched by the inverse scale so it also
    low-pass filters. ``scale`` (a number or an ``(sy, sx)`` pair) fixes the
    sampling geometry; by default it is ``out / in`` per axis. Pixels past
    the border repeat the edge value (``edge="clamp"``) or mirror it
    (``edge="reflect"``).
    """
    if out_h < 1 or out_w < 1:
        raise RangeError(f"output size must be >= 1x1, got {out_h}x{out_w}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if scale is None:
        sy, sx = out_h / h, out_w / w
    elif np.ndim(scale) == 0:
        sy = sx = float(scale)
    else:
        sy, sx = map(float, scale)
    out = _resize_axis(img, out_h, sy, 0, antialias, edge)
    return _resize_axis(out, out_w, sx, 1, antialias, edge)


def lr_size(h, w, scale):
    """LR dimensions: floor(dim / scale), tolerant of float noise in the division."""
    return int(math.floor(h / scale + 1e-9)), int(math.floor(w / scale + 1e-9))


def downscale(hr, scale, **kw):
    lh, lw = lr_size(*hr.shape[:2], scale)
    if lh < 1 or lw < 1:
        raise RangeError(f"image {hr.shape[:2]} is smaller than one LR pixel at scale {scale}")
    return bicubic_resize(hr, lh, lw, scale=1.0 / scale, **kw)


def make_ilr(hr, scale, **kw):
    """Bicubic down by ``scale`` then back up to exactly the HR size."""
    if not scale > 1:
        raise RangeError(f"scale must be > 1, got {scale}")
    lr = downscale(hr, scale, **kw)
    return bicubic_resize(lr, hr.shape[0], hr.shape[1], scale=scale, **kw)


# -- colour -------------------------------------------------------------------

_RGB_TO_YCBCR = np.array([[65.481, 128.553, 24.966],
                          [-37.797, -74.203, 112.0],
                          [112.0, -93.786, -18.214]]) / 255.0
_YCBCR_OFFSET = np.array([16.0, 128.0, 128.0]) / 255.0
_YCBCR_TO_RGB = np.linalg.inv(_RGB_TO_YCBCR)


@dataclass
class ImageY:
    """A luminance plane in [0, 1] with optional chroma planes for reassembly."""

    y: np.ndarray
    cb: np.ndarray = None
    cr: np.ndarray = None

    @property
    def shape(self):
        return self.y.shape

    @property
    def has_chroma(self):
        return self.cb is not None


def rgb_to_y(rgb):
    """BT.601 YCbCr (studio range) from 8-bit RGB, each plane divided by 255.

    A 2-D input is treated as already being luminance.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim == 2:
        return ImageY(rgb.astype(np.float64) / 255.0)
    ycc = (rgb[..., :3].astype(np.float64) / 255.0) @ _RGB_TO_YCBCR.T + _YCBCR_OFFSET
    return ImageY(ycc[..., 0], ycc[..., 1], ycc[..., 2])


def y_to_rgb(img):
    """Float RGB in [0, 1] (unclamped) back from :class:`ImageY`."""
    if not img.has_chroma:
        return img.y
    ycc = np.stack([img.y, img.cb, img.cr], axis=-1) - _YCBCR_OFFSET
    return ycc @ _YCBCR_TO_RGB.T


def to_uint8(x):
    """Scale [0, 1] floats to 8 bits, rounding halves away from zero and clamping."""
    v = np.asarray(x, dtype=np.float64) * 255.0
    return np.clip(np.sign(v) * np.floor(np.abs(v) + 0.5), 0, 255).astype(np.uint8)


def quantize(x):
    """Round to the 1/255 grid the way an exported 8-bit image would be."""
    return to_uint8(x).astype(np.float64) / 255.0


# -- patches ------------------------------------------------------------------

@dataclass
class PatchSample:
    ilr: np.ndarray
    residual: np.ndarray
    scale: float

    @property
    def hr(self):
        return self.ilr + self.residual


def snap(x):
    return (np.round(np.asarray(x, dtype=np.float64) / PATCH_GRID) * PATCH_GRID).astype(np.float32)


def extract_patches(hr, scale, patch_side, stride=None):
    """Cut an HR luminance plane and its ILR into aligned square patches.

    With the default stride the grid is non-overlapping and incomplete
    border strips are dropped. Too-small images yield an empty list and a
    warning.
    """
    hr = np.asarray(hr.y if isinstance(hr, ImageY) else hr, dtype=np.float64)
    stride = stride or patch_side
    h, w = hr.shape
    if patch_side > min(h, w):
        warnings.warn(f"patch side {patch_side} exceeds image size {h}x{w}; no patches")
        return []
    hr_s = snap(hr)
    ilr_s = snap(make_ilr(hr, scale))
    residual = hr_s - ilr_s
    out = []
    for top in range(0, h - patch_side + 1, stride):
        for left in range(0, w - patch_side + 1, stride):
            win = np.s_[top:top + patch_side, left:left + patch_side]
            out.append(PatchSample(ilr_s[win].copy(), residual[win].copy(), float(scale)))
    return out


def augment(sample):
    """The 8 rotations/reflections of a square patch, applied identically to both planes."""
    if sample.ilr.shape[0] != sample.ilr.shape[1]:
        raise ConfigError("augmentation needs square patches")
    out = []
    for flip in (False, True):
        ilr = np.fliplr(sample.ilr) if flip else sample.ilr
        res = np.fliplr(sample.residual) if flip else sample.residual
        for k in range(4):
            out.append(PatchSample(np.rot90(ilr, k).copy(), np.rot90(res, k).copy(), sample.scale))
    return out


@dataclass
class PatchSet:
    """Stacked training patches: ``ilr`` and ``residual`` are (N, s, s) float32."""

    ilr: np.ndarray
    residual: np.ndarray
    scales: np.ndarray
    seed: int = 0

    @classmethod
    def from_samples(cls, samples, seed=0):
        if not samples:
            raise ConfigError("patch set is empty")
        return cls(np.stack([s.ilr for s in samples]).astype(np.float32),
                   np.stack([s.residual for s in samples]).astype(np.float32),
                   np.array([s.scale for s in samples]), seed)

    def __len__(self):
        return len(self.scales)

    @property
    def patch_side(self):
        return self.ilr.shape[1]

    @property
    def scale_set(self):
        return sorted(set(self.scales.tolist()))

    def sample(self, i):
        return PatchSample(self.ilr[i], self.residual[i], float(self.scales[i]))


def build_patch_set(images, scales, patch_side, augment_data=True, seed=0):
    """Union of the patches of every image at every scale."""
    samples = []
    for img in images:
        for s in scales:
            for p in extract_patches(img, s, patch_side):
                samples.extend(augment(p) if augment_data else [p])
    ps = PatchSet.from_samples(samples, seed)
    missing = set(map(float, scales)) - set(ps.scale_set)
    if missing:
        raise ConfigError(f"no patches produced for scales {sorted(missing)}")
    return ps


@dataclass
class Batch:
    ilr: np.ndarray
    residual: np.ndarray
    scales: np.ndarray

    @property
    def hr(self):
        return self.ilr + self.residual


def make_batches(patch_set, batch_size=64, epoch_seed=0):
    """Shuffle with ``epoch_seed`` and cut into full batches of shape (b, 1, s, s)."""
    n = len(patch_set)
    if n < batch_size:
        raise ConfigError(f"{n} samples cannot fill one batch of {batch_size}")
    order = np.random.default_rng(epoch_seed).permutation(n)
    batches = []
    for start in range(0, n - batch_size + 1, batch_size):
        sel = order[start:start + batch_size]
        batches.append(Batch(patch_set.ilr[sel][:, None], patch_set.residual[sel][:, None],
                             patch_set.scales[sel]))
    return batches


def epoch_seed(seed, epoch):
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


# -- files --------------------------------------------------------------------

class ImageFormatError(OSError):
    pass


def load_image(path):
    """8-bit pixels as (H, W) for grayscale or (H, W, 3) for colour."""
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                return np.asarray(im, dtype=np.uint8)
            if im.mode in ("I;16", "I", "F"):
                raise ImageFormatError(f"{path}: only 8-bit images are supported")
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: unsupported image format") from exc


def save_image(path, pixels):
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PNG")


def load_luminance(path):
    return rgb_to_y(load_image(path))


IMAGE_SUFFIXES = {".png", ".bmp", ".tif", ".tiff", ".ppm", ".pgm"}


def read_manifest(path):
    """Image paths listed one per line; relative entries resolve against the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest {path} does not exist")
    entries = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            p = Path(line)
            entries.append(p if p.is_absolute() else path.parent / p)
    return entries


def list_images(source):
    """Paths from a manifest file or a directory tree (sorted)."""
    source = Path(source)
    if source.is_dir():
        return sorted(p for p in source.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES)
    return read_manifest(source)


def load_dataset(source):
    """[(name, ImageY)] for every image of a manifest or directory."""
    paths = list_images(source)
    if not paths:
        raise ConfigError(f"no images found in {source}")
    return [(p.stem, load_luminance(p)) for p in paths]


def _cache_key(paths, scales, patch_side, augment_data):
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    h.update(repr((sorted(map(float, scales)), int(patch_side), bool(augment_data))).encode())
    return h.hexdigest()[:20]


def cached_patch_set(paths, scales, patch_side, augment_data=True, cache_dir=None, seed=0):
    """Build (or reload) the patch set for ``paths``.

    The cache is ``patches-<key>.npz`` under ``cache_dir`` holding arrays
    ``ilr``, ``residual`` (float32, N x s x s), ``scales`` (float64, N) and
    ``format`` (int); ``key`` hashes the image bytes, scale set, patch side
    and augmentation flag.
    """
    if cache_dir is not None:
        cache = Path(cache_dir) / f"patches-{_cache_key(paths, scales, patch_side, augment_data)}.npz"
        if cache.exists():
            with np.load(cache) as z:
                if int(z["format"]) == CACHE_FORMAT:
                    log.info("loaded patch cache %s", cache)
                    return PatchSet(z["ilr"], z["residual"], z["scales"], seed)
    images = [load_luminance(p).y for p in paths]
    ps = build_patch_set(images, scales, patch_side, augment_data, seed)
    if cache_dir is not None:
        cache.parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache, ilr=ps.ilr, residual=ps.residual, scales=ps.scales,
                 format=np.array(CACHE_FORMAT))
    return ps
