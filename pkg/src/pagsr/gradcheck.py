"""Central finite-difference checks of the analytic (autograd) gradients."""

from dataclasses import dataclass

import numpy as np
import torch

from .metrics import LossWeights, loss_and_grad, total_loss
from .model import ModelConfig, build_model

STEP = 1e-4
TOLERANCE = 1e-3
KINK = 1e-6


@dataclass
class GradcheckResult:
    name: str
    max_rel_error: float
    checked: int
    skipped: int = 0

    @property
    def passed(self):
        return self.checked > 0 and self.max_rel_error < TOLERANCE


def relative_error(analytic, numeric):
    denom = max(abs(analytic), abs(numeric))
    return 0.0 if denom == 0 else abs(analytic - numeric) / denom


def check_loss_gradient(shape=(6, 8), weights=LossWeights(10.0, 1.0), seed=0, h=STEP):
    rng = np.random.default_rng(seed)
    pred = rng.random(shape)
    target = rng.random(shape)
    _, grad = loss_and_grad(pred, target, weights)
    worst, checked, skipped = 0.0, 0, 0
    for idx in np.ndindex(*shape):
        if abs(pred[idx] - target[idx]) < KINK:
            skipped += 1
            continue
        up, down = pred.copy(), pred.copy()
        up[idx] += h
        down[idx] -= h
        numeric = (loss_and_grad(up, target, weights)[0] - loss_and_grad(down, target, weights)[0]) / (2 * h)
        worst = max(worst, relative_error(grad[idx], numeric))
        checked += 1
    return GradcheckResult("total_loss", worst, checked, skipped)


def tiny_config():
    return ModelConfig(scale_exp=1, width=4, n_levels=2)


def parameter_blocks(model):
    """Group parameter names by block (conv_in, trunk.D1, fus.1, cedge, up.1, final, ...)."""
    blocks = {}
    for name, _ in model.named_parameters():
        parts = name.split(".")
        key = ".".join(parts[:2]) if parts[0] in ("trunk", "fus", "up") else parts[0]
        blocks.setdefault(key, []).append(name)
    return blocks


def check_model_gradient(config=None, per_block=5, seed=0, h=STEP, lr_hw=(6, 8), weights=LossWeights(10.0, 1.0)):
    """Compare autograd against central differences for random scalars of every block.

    Runs in float64. Returns one GradcheckResult per block.
    """
    config = config or tiny_config()
    model = build_model(config, seed).double()
    gen = torch.Generator().manual_seed(seed + 1)
    # random biases so no block sits on a degenerate all-zero path
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("bias"):
                p.copy_(0.1 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    s = config.scale
    x_l = torch.rand(1, 1, *lr_hw, generator=gen, dtype=torch.float64)
    guide = None
    if config.guide_mode != "none":
        guide = torch.rand(1, config.guide_channels, lr_hw[0] * s, lr_hw[1] * s, generator=gen, dtype=torch.float64)
    target = torch.rand(1, 1, lr_hw[0] * s, lr_hw[1] * s, generator=gen, dtype=torch.float64)

    def loss_value():
        return total_loss(model(x_l, guide), target, weights)

    model.zero_grad()
    loss_value().backward()
    params = dict(model.named_parameters())
    rng = np.random.default_rng(seed)
    results = []
    for block, names in parameter_blocks(model).items():
        entries = [(n, i) for n in names for i in range(params[n].numel())]
        picks = rng.choice(len(entries), size=min(per_block, len(entries)), replace=False)
        worst = 0.0
        for k in picks:
            name, i = entries[k]
            p = params[name]
            flat = p.data.view(-1)
            analytic = p.grad.view(-1)[i].item()
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
                f_up = loss_value().item()
                flat[i] = orig - h
                f_down = loss_value().item()
                flat[i] = orig
            worst = max(worst, relative_error(analytic, (f_up - f_down) / (2 * h)))
        results.append(GradcheckResult(block, worst, len(picks)))
    return results


def run_all(seed=0):
    return [check_loss_gradient(seed=seed), *check_model_gradient(seed=seed)]
