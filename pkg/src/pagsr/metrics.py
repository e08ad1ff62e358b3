"""Training objective (L1 + Laplacian L1) and image quality metrics."""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .errors import InvalidArgument

PSNR_CAP = 100.0
LAPLACIAN_STENCIL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class LossWeights:
    gamma1: float = 10.0
    gamma2: float = 1.0

    def __post_init__(self):
        if self.gamma1 < 0 or self.gamma2 < 0 or (self.gamma1 == 0 and self.gamma2 == 0):
            raise InvalidArgument(f"loss weights must be >= 0 and not both zero: {self}")


def laplacian(x):
    """Per-channel 4-neighbour Laplacian with reflect padding.

    Accepts an (N, C, H, W) tensor (differentiable) or an H x W (x C) array.
    """
    if not isinstance(x, torch.Tensor):
        arr = np.asarray(x, dtype=np.float64)
        t = torch.from_numpy(arr if arr.ndim == 2 else np.moveaxis(arr, 2, 0).copy())
        t = t.reshape(1, -1, *arr.shape[:2])
        out = laplacian(t)[0].numpy()
        return out[0] if arr.ndim == 2 else np.moveaxis(out, 0, 2)
    c = x.shape[1]
    kernel = torch.tensor(LAPLACIAN_STENCIL, dtype=x.dtype, device=x.device).expand(c, 1, 3, 3)
    return F.conv2d(F.pad(x, (1, 1, 1, 1), mode="reflect"), kernel, groups=c)


def loss_terms(pred, target):
    if pred.shape != target.shape:
        raise InvalidArgument(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    l1 = (pred - target).abs().mean()
    lgrad = (laplacian(pred) - laplacian(target)).abs().mean()
    return l1, lgrad


def total_loss(pred, target, weights=LossWeights()):
    """gamma1 * mean|pred - target| + gamma2 * mean|lap(pred) - lap(target)| on tensors."""
    l1, lgrad = loss_terms(pred, target)
    return weights.gamma1 * l1 + weights.gamma2 * lgrad


def loss_and_grad(pred, target, weights=LossWeights()):
    """Loss value and its gradient w.r.t. ``pred`` for H x W arrays (float64)."""
    p = torch.tensor(np.asarray(pred, dtype=np.float64)).reshape(1, 1, *np.shape(pred)[:2]).requires_grad_(True)
    t = torch.tensor(np.asarray(target, dtype=np.float64)).reshape(1, 1, *np.shape(target)[:2])
    if p.shape != t.shape:
        raise InvalidArgument(f"shape mismatch: {np.shape(pred)} vs {np.shape(target)}")
    loss = total_loss(p, t, weights)
    loss.backward()
    return loss.item(), p.grad.reshape(np.shape(pred)).numpy()


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b):
    a, b = _same_shape(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak=1.0):
    err = mse(a, b)
    if err == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak**2 / err))


def _gauss_window(size=11, sigma=1.5):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img, g):
    n = len(g)
    h, w = img.shape
    rows = sum(g[k] * img[k : h - n + 1 + k, :] for k in range(n))
    return sum(g[k] * rows[:, k : w - n + 1 + k] for k in range(n))


def ssim(a, b, data_range=1.0, win_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean SSIM over all fully-contained 11x11 Gaussian windows."""
    a, b = _same_shape(a, b)
    if a.ndim == 3:
        if a.shape[2] != 1:
            raise InvalidArgument("ssim expects a single-channel image")
        a, b = a[:, :, 0], b[:, :, 0]
    if a.shape[0] < win_size or a.shape[1] < win_size:
        raise InvalidArgument(f"image {a.shape} smaller than the {win_size}x{win_size} window")
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    g = _gauss_window(win_size, sigma)
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    mse: float
    extra: dict = field(default_factory=dict)
    count: int = 1

    def to_dict(self):
        return {"psnr": self.psnr, "ssim": self.ssim, "mse": self.mse, **self.extra}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=False)

    def csv_header(self):
        return ["id", "psnr", "ssim", "mse", *self.extra]

    def csv_row(self, row_id=""):
        return [row_id, self.psnr, self.ssim, self.mse, *self.extra.values()]

    def to_csv(self, row_id="", header=True):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(self.csv_header())
        writer.writerow(self.csv_row(row_id))
        return buf.getvalue()


def image_metrics(pred, target, extra_metrics=None):
    extra = {name: float(fn(pred, target)) for name, fn in (extra_metrics or {}).items()}
    return MetricReport(psnr=psnr(pred, target), ssim=ssim(pred, target), mse=mse(pred, target), extra=extra)


def evaluate(pred_set, target_set, extra_metrics=None):
    """Arithmetic mean of per-image metrics (PSNR averaged in dB).

    ``extra_metrics`` maps names to ``(pred, target) -> float`` callables,
    e.g. an external perceptual distance.
    """
    pred_set = list(pred_set)
    target_set = list(target_set)
    if not pred_set:
        raise InvalidArgument("cannot evaluate an empty set")
    if len(pred_set) != len(target_set):
        raise InvalidArgument(f"{len(pred_set)} predictions for {len(target_set)} targets")
    reports = [image_metrics(p, t, extra_metrics) for p, t in zip(pred_set, target_set)]
    return average_reports(reports)


def average_reports(reports):
    n = len(reports)
    keys = list(reports[0].extra)
    return MetricReport(
        psnr=sum(r.psnr for r in reports) / n,
        ssim=sum(r.ssim for r in reports) / n,
        mse=sum(r.mse for r in reports) / n,
        extra={k: sum(r.extra[k] for r in reports) / n for k in keys},
        count=n,
    )
