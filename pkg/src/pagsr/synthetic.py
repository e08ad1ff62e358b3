"""Procedural thermal/visible scene pairs for smoke tests and demos.

The thermal image is a smooth temperature field with a few warm objects of
soft outline. The visible guide shares the object outlines but adds colour
and fine texture that has no thermal counterpart, mimicking the texture
mismatch between the two bands.
"""

from pathlib import Path

import numpy as np

from .data.dataset import make_pair
from .data.degrade import DegradationSpec, gaussian_blur
from .edges import extract_fallback_pyramid, save_pyramid
from .imageio import write_image


def _object_masks(h, w, rng, n_objects):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    masks = []
    for _ in range(n_objects):
        cy, cx = rng.uniform(0.15, 0.85) * h, rng.uniform(0.1, 0.9) * w
        ry, rx = rng.uniform(0.06, 0.2) * h, rng.uniform(0.05, 0.18) * w
        if rng.random() < 0.5:
            mask = ((np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)).astype(np.float64)
        else:
            mask = ((((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) <= 1.0).astype(np.float64)
        masks.append(mask)
    return masks


def scene_pair(hr_hw=(256, 320), seed=0, n_objects=5, edge_softness=1.2):
    """Return (thermal H x W x 1, guide H x W x 3), both in [0, 1]."""
    h, w = hr_hw
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    thermal = 0.25 + 0.2 * (yy / h) + 0.05 * np.sin(2 * np.pi * xx / w * rng.uniform(0.5, 1.5))
    guide = np.empty((h, w, 3))
    guide[..., 0] = 0.55 - 0.25 * (yy / h)
    guide[..., 1] = 0.6 - 0.1 * (yy / h)
    guide[..., 2] = 0.8 - 0.4 * (yy / h)
    for mask in _object_masks(h, w, rng, n_objects):
        soft = gaussian_blur(mask, edge_softness)
        thermal = thermal * (1 - soft) + soft * rng.uniform(0.55, 0.9)
        colour = rng.uniform(0.1, 0.9, size=3)
        # texture visible only in the guide
        period = rng.uniform(3.0, 9.0)
        stripes = 0.08 * np.sign(np.sin(2 * np.pi * (xx + yy * rng.uniform(-1, 1)) / period))
        guide = guide * (1 - soft[..., None]) + soft[..., None] * (colour + stripes[..., None])
    for _ in range(3):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        s = rng.uniform(0.03, 0.08) * min(h, w)
        thermal = thermal + 0.12 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    return np.clip(thermal, 0, 1)[..., None].astype(np.float32), np.clip(guide, 0, 1).astype(np.float32)


def synthetic_pair(lr_hw=(64, 80), scale=4, sigma=1.0, seed=0, n_levels=5):
    """A SamplePair built from a procedural scene and the fallback edge pyramid."""
    hr = (lr_hw[0] * scale, lr_hw[1] * scale)
    thermal, guide = scene_pair(hr, seed)
    edges = extract_fallback_pyramid(guide, n_levels)
    return make_pair(thermal, guide, edges, DegradationSpec(sigma=sigma, scale=scale), image_id=f"synth{seed}")


def write_dataset(root, n_images=4, hr_hw=(256, 320), seed=0, n_levels=5, n_test=1):
    """Write a dataset in the on-disk layout, with fallback edge maps and split files."""
    root = Path(root)
    ids = [f"scene{i:03d}" for i in range(n_images)]
    for i, image_id in enumerate(ids):
        thermal, guide = scene_pair(hr_hw, seed + i)
        write_image(root / "thermal" / f"{image_id}.png", thermal, bits=16)
        write_image(root / "visible" / f"{image_id}.png", guide)
        save_pyramid(extract_fallback_pyramid(guide, n_levels), root / "edges" / image_id)
    splits = root / "splits"
    splits.mkdir(parents=True, exist_ok=True)
    n_train = max(n_images - n_test, 1)
    (splits / "train.txt").write_text("\n".join(ids[:n_train]) + "\n")
    (splits / "test.txt").write_text("\n".join(ids[n_train:] or ids[-1:]) + "\n")
    return ids
