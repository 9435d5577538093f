"""SGD with momentum and weight decay, a step learning-rate schedule and
learning-rate-adjusted gradient clipping."""

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, RangeError, ShapeError


@dataclass
class TrainConfig:
    base_lr: float = 0.1
    lr_drop_factor: float = 10.0
    lr_drop_every_epochs: int = 20
    total_epochs: int = 80
    momentum: float = 0.9
    weight_decay: float = 1e-4
    theta: float = 1e-3
    residual_mode: bool = True
    batch_size: int = 64
    seed: int = 0
    depth: int = 20
    width: int = 64
    scales: tuple = (2.0, 3.0, 4.0)
    eval_scales: tuple = None
    crop: int = None

    def __post_init__(self):
        self.scales = tuple(float(s) for s in self.scales)
        if self.eval_scales is None:
            self.eval_scales = self.scales
        self.eval_scales = tuple(float(s) for s in self.eval_scales)

    def validate(self):
        for name in ("base_lr", "lr_drop_factor", "theta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.lr_drop_every_epochs < 1:
            raise ConfigError("lr_drop_every_epochs must be >= 1")
        if self.total_epochs < 0:
            raise ConfigError("total_epochs must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.depth < 2 or self.width < 1:
            raise ConfigError("depth must be >= 2 and width >= 1")
        if not self.scales or any(s <= 1 for s in self.scales + self.eval_scales):
            raise ConfigError("scale factors must be > 1")
        return self

    def to_dict(self):
        d = asdict(self)
        d["scales"] = list(self.scales)
        d["eval_scales"] = list(self.eval_scales)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def lr_at(config, epoch):
    """Step schedule: base_lr / drop_factor ** (epoch // drop_every)."""
    if not 0 <= epoch < max(config.total_epochs, 1):
        raise RangeError(f"epoch {epoch} outside [0, {config.total_epochs})")
    return config.base_lr / config.lr_drop_factor ** (epoch // config.lr_drop_every_epochs)


def clip_bound(theta, lr, dtype=np.float64):
    """Largest value ``b`` of ``dtype`` with ``b <= theta/lr`` and ``lr*b <= theta``.

    Rounding ``theta/lr`` to the nearest float can land one ulp above the true
    bound; stepping down keeps both inequalities exact.
    """
    if not (theta > 0 and lr > 0):
        raise ConfigError(f"theta and lr must be > 0, got theta={theta}, lr={lr}")
    dtype = np.dtype(dtype)
    b = dtype.type(theta / lr)
    while float(b) > theta / lr or lr * float(b) > theta:
        b = np.nextafter(b, dtype.type(0))
    return b


def clip_adjustable(grads, theta, lr):
    """Clamp every gradient component to [-theta/lr, theta/lr]."""
    out = []
    for g in grads:
        b = clip_bound(theta, lr, g.dtype)
        out.append(np.clip(g, -b, b))
    return out


@dataclass
class SgdState:
    velocity: list
    step: int = 0
    epoch: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls([np.zeros_like(p) for p in params])


def sgd_step(params, grads, state, config, lr):
    """One momentum step, updating ``params`` and ``state`` in place.

    ``v <- momentum * v - lr * (g + weight_decay * w)`` then ``w <- w + v``.
    ``grads`` are expected to be clipped already; decay is added afterwards.
    """
    if not (len(params) == len(grads) == len(state.velocity)):
        raise ShapeError("params, grads and velocities differ in length")
    mu = config.momentum
    wd = config.weight_decay
    for w, g, v in zip(params, grads, state.velocity):
        if not (w.shape == g.shape == v.shape):
            raise ShapeError(f"shape mismatch: param {w.shape}, grad {g.shape}, velocity {v.shape}")
        t = w.dtype.type
        v *= t(mu)
        v -= t(lr) * (g + t(wd) * w)
        w += v
    state.step += 1
    return params, state
