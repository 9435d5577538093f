"""Training loop, checkpointing and the depth / scale-factor experiments."""

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import network, weights
from .data import build_patch_set, epoch_seed, make_batches
from .errors import ConfigError, DivergenceError
from .metrics import benchmark_run
from .network import VdsrModel, init_he
from .optimizer import SgdState, TrainConfig, clip_adjustable, clip_bound, lr_at, sgd_step

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    psnr: dict = field(default_factory=dict)

    def mean_psnr(self):
        vals = [v for v in self.psnr.values() if math.isfinite(v)]
        return float(np.mean(vals)) if vals else -math.inf


@dataclass
class StepInfo:
    """What the optimizer did on one batch; handed to ``step_hook``."""

    epoch: int
    batch: int
    step: int
    loss: float
    lr: float
    bound: float
    max_abs_grad: float
    max_abs_grad_clipped: float
    max_abs_effective_step: float
    max_abs_update: float


@dataclass
class TrainRun:
    config: TrainConfig
    model: VdsrModel
    state: SgdState
    history: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    best_epoch: int = None
    best_score: float = -math.inf
    run_dir: Path = None

    def final_psnr(self, scale=None):
        last = self.history[-1]
        return last.mean_psnr() if scale is None else last.psnr[float(scale)]


def evaluate(model, eval_set, config):
    """Mean PSNR per eval scale, scored exactly as the benchmark scores."""
    if not eval_set:
        return {}
    report = benchmark_run(model, eval_set, config.eval_scales, config.crop, config.residual_mode)
    return {s: m[0] for s, m in report.means().items()}


# -- run directory ------------------------------------------------------------

def _history_header(config):
    return ["epoch", "lr", "train_loss"] + [f"psnr_x{s:g}" for s in config.eval_scales]


def write_history(path, config, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_history_header(config))
        for h in history:
            w.writerow([h.epoch, repr(h.lr), repr(h.train_loss)]
                       + [repr(h.psnr.get(s, math.nan)) for s in config.eval_scales])


def read_history(path, config):
    out = []
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    for row in rows[1:]:
        psnr = {s: float(v) for s, v in zip(config.eval_scales, row[3:]) if not math.isnan(float(v))}
        out.append(EpochRecord(int(row[0]), float(row[1]), float(row[2]), psnr))
    return out


def _save_state(path, state, run):
    arrays = {f"v{k}": v for k, v in enumerate(state.velocity)}
    np.savez(path, step=state.step, epoch=state.epoch, best_epoch=-1 if run.best_epoch is None
             else run.best_epoch, best_score=run.best_score, **arrays)


def _load_state(path):
    with np.load(path) as z:
        n = sum(1 for k in z.files if k.startswith("v"))
        state = SgdState([z[f"v{k}"].copy() for k in range(n)], int(z["step"]), int(z["epoch"]))
        best_epoch = int(z["best_epoch"])
        return state, (None if best_epoch < 0 else best_epoch), float(z["best_score"])


def _checkpoint(run, epoch):
    if run.run_dir is None:
        return
    path = run.run_dir / f"ckpt-{epoch}.vdsr"
    weights.save(path, run.model)
    _save_state(run.run_dir / f"state-{epoch}.npz", run.state, run)
    run.checkpoints.append(path)


def _attach_log(run_dir):
    handler = logging.FileHandler(run_dir / "log.txt")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    logging.getLogger("vdsr").addHandler(handler)
    logging.getLogger("vdsr").setLevel(logging.INFO)
    return handler


# -- training -----------------------------------------------------------------

def _run_epochs(run, patch_set, eval_set, start_epoch, step_hook):
    config = run.config
    mode = config.residual_mode
    params = run.model.parameters()
    for epoch in range(start_epoch, config.total_epochs):
        lr = lr_at(config, epoch)
        run.state.epoch = epoch
        losses = []
        for b, batch in enumerate(make_batches(patch_set, config.batch_size,
                                               epoch_seed(config.seed, epoch))):
            loss, layer_grads = network.loss_and_grad(run.model, batch.ilr, batch.hr, mode)
            if not math.isfinite(loss):
                raise DivergenceError(epoch, b, loss)
            grads = [g for pair in layer_grads for g in pair]
            clipped = clip_adjustable(grads, config.theta, lr)
            if step_hook is not None:
                before = [p.copy() for p in params]
            sgd_step(params, clipped, run.state, config, lr)
            losses.append(loss)
            if step_hook is not None:
                step_hook(StepInfo(
                    epoch, b, run.state.step, loss, lr,
                    float(clip_bound(config.theta, lr, params[0].dtype)),
                    max(float(np.max(np.abs(g))) for g in grads),
                    max(float(np.max(np.abs(g))) for g in clipped),
                    max(float(np.max(np.abs(lr * g.astype(np.float64)))) for g in clipped),
                    max(float(np.max(np.abs(p - q))) for p, q in zip(params, before))))
        record = EpochRecord(epoch + 1, lr, float(np.mean(losses)), evaluate(run.model, eval_set, config))
        run.history.append(record)
        key = record.mean_psnr() if record.psnr else -record.train_loss
        improved = key > run.best_score
        if improved:
            run.best_score, run.best_epoch = key, record.epoch
        log.info("epoch %d lr %.3g loss %.6g psnr %s", record.epoch, lr, record.train_loss,
                 {f"x{s:g}": round(v, 3) for s, v in record.psnr.items()})
        if run.run_dir is not None:
            _checkpoint(run, record.epoch)
            if improved:
                weights.save(run.run_dir / "best.vdsr", run.model)
            write_history(run.run_dir / "history.csv", config, run.history)
    return run


def _finish(run, plot):
    if run.run_dir is not None and plot and run.history:
        from .plotting import plot_history
        plot_history(run.history, run.run_dir / "history.png",
                     title=f"depth {run.config.depth}, {'residual' if run.config.residual_mode else 'non-residual'}")
    return run


def train(config, patch_set, eval_set=(), run_dir=None, step_hook=None, plot=True):
    """Train a fresh He-initialised model.

    Parameters
    ----------
    config : TrainConfig
    patch_set : PatchSet
        Must hold at least one full batch.
    eval_set : sequence of (name, ImageY or 2-D array)
        Scored after every epoch at ``config.eval_scales``.
    run_dir : path, optional
        Receives ``config.json``, ``history.csv``, ``ckpt-<epoch>.vdsr`` (with
        optimizer state in ``state-<epoch>.npz``), ``best.vdsr``, ``log.txt``
        and ``history.png``. ``ckpt-0`` holds the initial weights.
    step_hook : callable, optional
        Called with a :class:`StepInfo` after every optimizer step.

    Raises
    ------
    DivergenceError
        On a NaN/Inf loss; no learning-rate fallback is attempted.
    """
    config.validate()
    if len(patch_set) < config.batch_size:
        raise ConfigError(f"patch set of {len(patch_set)} cannot fill a batch of {config.batch_size}")
    model = init_he(VdsrModel.zeros(config.depth, config.width, np.float32), config.seed)
    run = TrainRun(config, model, SgdState.zeros_like(model.parameters()))
    handler = None
    if run_dir is not None:
        run.run_dir = Path(run_dir)
        run.run_dir.mkdir(parents=True, exist_ok=True)
        (run.run_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
        handler = _attach_log(run.run_dir)
        _checkpoint(run, 0)
        write_history(run.run_dir / "history.csv", config, [])
    try:
        _run_epochs(run, patch_set, eval_set, 0, step_hook)
    finally:
        if handler is not None:
            logging.getLogger("vdsr").removeHandler(handler)
            handler.close()
    return _finish(run, plot)


def latest_checkpoint(run_dir):
    epochs = [int(p.stem.split("-")[1]) for p in Path(run_dir).glob("ckpt-*.vdsr")
              if (Path(run_dir) / f"state-{p.stem.split('-')[1]}.npz").exists()]
    if not epochs:
        raise ConfigError(f"no resumable checkpoint in {run_dir}")
    return max(epochs)


def resume(run_dir, patch_set, eval_set=(), epoch=None, total_epochs=None, step_hook=None, plot=True):
    """Continue a run from ``ckpt-<epoch>`` (latest by default).

    The continued history matches an uninterrupted run with the same config.
    """
    run_dir = Path(run_dir)
    config = TrainConfig.from_dict(json.loads((run_dir / "config.json").read_text()))
    if total_epochs is not None:
        config = replace(config, total_epochs=total_epochs)
        (run_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    config.validate()
    epoch = latest_checkpoint(run_dir) if epoch is None else epoch
    model = weights.load(run_dir / f"ckpt-{epoch}.vdsr")
    state, best_epoch, best_score = _load_state(run_dir / f"state-{epoch}.npz")
    history = [h for h in read_history(run_dir / "history.csv", config) if h.epoch <= epoch]
    run = TrainRun(config, model, state, history, [], best_epoch, best_score, run_dir)
    handler = _attach_log(run_dir)
    try:
        _run_epochs(run, patch_set, eval_set, epoch, step_hook)
    finally:
        logging.getLogger("vdsr").removeHandler(handler)
        handler.close()
    return _finish(run, plot)


# -- experiments --------------------------------------------------------------

@dataclass
class DepthRow:
    depth: int
    psnr: dict


@dataclass
class DepthReport:
    rows: list
    scales: tuple

    @property
    def depths(self):
        return [r.depth for r in self.rows]

    def to_csv(self, path=None):
        lines = ["depth," + ",".join(f"psnr_x{s:g}" for s in self.scales)]
        lines += [f"{r.depth}," + ",".join(f"{r.psnr[s]:.4f}" for s in self.scales) for r in self.rows]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def experiment_depth(depths, config, patch_set, eval_set):
    """One model per depth on the same patches and seed; final eval PSNR per depth."""
    if len(depths) < 1:
        raise ConfigError("need at least one depth")
    rows = []
    for d in depths:
        run = train(replace(config, depth=int(d)), patch_set, eval_set, plot=False)
        rows.append(DepthRow(int(d), dict(run.history[-1].psnr) if run.history else {}))
    return DepthReport(rows, config.eval_scales)


@dataclass
class ScaleReport:
    """PSNR[test][train-label] plus the bicubic column."""

    test_scales: tuple
    train_sets: list
    psnr: dict
    bicubic: dict

    @staticmethod
    def label(train_set):
        return "x" + "+".join(f"{s:g}" for s in sorted(train_set))

    def train_labels(self):
        return [self.label(t) for t in self.train_sets]

    def cell(self, test, label):
        return self.bicubic[test] if label == "bicubic" else self.psnr[test][label]

    def to_csv(self, path=None):
        labels = self.train_labels() + ["bicubic"]
        lines = ["test/train," + ",".join(labels)]
        for t in self.test_scales:
            lines.append(f"x{t:g}," + ",".join(f"{self.cell(t, lab):.4f}" for lab in labels))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def bicubic_psnr(eval_set, scales, crop=None):
    return {float(s): benchmark_run(VdsrModel.zeros(2, 1), eval_set, [s], crop).mean_psnr(s)
            for s in scales}


def experiment_scales(train_sets, test_scales, config, train_images, eval_set, patch_side=None):
    """Train one model per scale set and score each on every test scale."""
    train_sets = [tuple(sorted(map(float, t))) for t in train_sets]
    test_scales = tuple(map(float, test_scales))
    if not train_sets or not test_scales or any(not t for t in train_sets):
        raise ConfigError("train and test scale sets must be non-empty")
    if not train_images or not eval_set:
        raise ConfigError("experiment needs training images and an eval set")
    side = patch_side or network.receptive_field(config.depth)
    psnr = {t: {} for t in test_scales}
    for ts in train_sets:
        ps = build_patch_set(train_images, ts, side, seed=config.seed)
        run = train(replace(config, scales=ts, eval_scales=test_scales), ps, eval_set, plot=False)
        for t in test_scales:
            psnr[t][ScaleReport.label(ts)] = run.history[-1].psnr[t]
    return ScaleReport(test_scales, train_sets, psnr, bicubic_psnr(eval_set, test_scales, config.crop))
