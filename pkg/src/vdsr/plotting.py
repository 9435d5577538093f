"""Figures written next to the CSV reports (PNG, headless backend)."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
}


def _finish(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_history(history, path, title=None):
    """Eval PSNR per scale and train loss against epoch."""
    with plt.rc_context(STYLE):
        fig, (ax_psnr, ax_loss) = plt.subplots(1, 2, figsize=(7.5, 2.8))
        epochs = [h.epoch for h in history]
        scales = sorted({s for h in history for s in h.psnr})
        for s in scales:
            ax_psnr.plot(epochs, [h.psnr.get(s, np.nan) for h in history], marker="o", ms=3,
                         label=f"x{s:g}")
        ax_psnr.set_xlabel("epoch")
        ax_psnr.set_ylabel("PSNR (dB)")
        if scales:
            ax_psnr.legend(frameon=False)
        losses = [h.train_loss for h in history]
        ax_loss.plot(epochs, losses, color="k")
        if losses and all(l > 0 for l in losses):
            ax_loss.set_yscale("log")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("train loss")
        if title:
            fig.suptitle(title)
        return _finish(fig, path)


def plot_runs(runs, path, scale, title=None):
    """Overlay PSNR curves of several runs (e.g. residual vs. non-residual)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        for label, history in runs.items():
            ax.plot([h.epoch for h in history], [h.psnr[scale] for h in history], marker="o", ms=3,
                    label=label)
        ax.set_xlabel("epoch")
        ax.set_ylabel(f"PSNR x{scale:g} (dB)")
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        return _finish(fig, path)


def plot_benchmark(report, path):
    """Per-image PSNR bars, one group per image, one bar per scale."""
    with plt.rc_context(STYLE):
        scales = report.scales()
        images = list(dict.fromkeys(r.image for r in report.records))
        fig, ax = plt.subplots(figsize=(max(3.5, 0.7 * len(images) * len(scales)), 3))
        width = 0.8 / max(len(scales), 1)
        lookup = {(r.image, r.scale): r.psnr_db for r in report.records}
        for k, s in enumerate(scales):
            vals = [lookup.get((im, s), np.nan) for im in images]
            vals = [v if math.isfinite(v) else np.nan for v in vals]
            ax.bar(np.arange(len(images)) + k * width, vals, width, label=f"x{s:g}")
        ax.set_xticks(np.arange(len(images)) + 0.4 - width / 2)
        ax.set_xticklabels(images, rotation=30, ha="right")
        ax.set_ylabel("PSNR (dB)")
        ax.legend(frameon=False)
        if report.dataset:
            ax.set_title(report.dataset)
        return _finish(fig, path)


def plot_depth(report, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        for s in report.scales:
            ax.plot(report.depths, [row.psnr[s] for row in report.rows], marker="o", label=f"x{s:g}")
        ax.set_xlabel("depth")
        ax.set_ylabel("PSNR (dB)")
        ax.legend(frameon=False)
        return _finish(fig, path)


def plot_scale_matrix(report, path):
    with plt.rc_context(STYLE):
        labels = report.train_labels() + ["bicubic"]
        grid = np.array([[report.cell(t, lab) for lab in labels] for t in report.test_scales])
        fig, ax = plt.subplots(figsize=(1.1 * len(labels) + 1, 0.6 * len(report.test_scales) + 1.2))
        im = ax.imshow(grid, cmap="viridis", aspect="auto")
        for (i, j), v in np.ndenumerate(grid):
            ax.text(j, i, f"{v:.2f}", ha="center", va="center", color="w", fontsize=7)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels)
        ax.set_yticks(range(len(report.test_scales)))
        ax.set_yticklabels([f"x{s:g}" for s in report.test_scales])
        ax.set_xlabel("train scales")
        ax.set_ylabel("test scale")
        fig.colorbar(im, ax=ax, label="PSNR (dB)")
        return _finish(fig, path)
