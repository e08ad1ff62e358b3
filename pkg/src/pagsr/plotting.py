"""Figures written next to the CSV/markdown/JSON reports."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_history(history, path):
    """Training loss (log scale) with validation PSNR on a twin axis."""
    steps = [r["step"] for r in history if "loss" in r]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        ax.semilogy(steps, [r["loss"] for r in history if "loss" in r], lw=0.8, color="C0", label="loss")
        ax.set_xlabel("step")
        ax.set_ylabel("training loss")
        val = [r for r in history if "psnr" in r]
        if val:
            ax2 = ax.twinx()
            ax2.plot([r["step"] for r in val], [r["psnr"] for r in val], "o-", ms=3, color="C3", label="val PSNR")
            ax2.set_ylabel("PSNR (dB)")
            ax2.spines["right"].set_visible(True)
        return _save(fig, path)


def plot_bench(report, path):
    """Bar chart of PSNR and SSIM per ablation case; failed cases are omitted."""
    rows = [r for r in report.rows if r.metrics is not None]
    names = [r.case for r in rows]
    x = np.arange(len(rows))
    with plt.rc_context(RC):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(max(5.0, 0.9 * len(rows) + 2.5), 3.2))
        a1.bar(x, [r.metrics.psnr for r in rows], color="C0")
        a1.set_ylabel("PSNR (dB)")
        a2.bar(x, [r.metrics.ssim for r in rows], color="C2")
        a2.set_ylabel("SSIM")
        for ax in (a1, a2):
            ax.set_xticks(x)
            ax.set_xticklabels(names, rotation=45, ha="right")
        if rows:
            lo = min(r.metrics.psnr for r in rows)
            a1.set_ylim(lo - 2.0, max(r.metrics.psnr for r in rows) + 1.0)
        fig.suptitle(report.metadata.get("bench_id", "ablation"))
        return _save(fig, path)


def plot_sample(x_up, pred, target, path, title=None):
    """Bicubic, prediction, ground truth and |error| side by side."""
    panels = [("bicubic", x_up), ("prediction", pred), ("ground truth", target), ("|pred - gt|", np.abs(pred - target))]
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 4, figsize=(11, 2.6))
        for ax, (label, img) in zip(axes, panels):
            img = np.squeeze(img)
            ax.imshow(img, cmap="inferno", vmin=0.0, vmax=1.0 if label != "|pred - gt|" else max(float(img.max()), 1e-6))
            ax.set_title(label)
            ax.axis("off")
        if title:
            fig.suptitle(title)
        return _save(fig, path)
