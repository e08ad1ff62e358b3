"""Paired thermal/visible datasets on disk and the seeded sample stream.

Layout under ``root``::

    thermal/<id>.png|tiff     1-channel high-resolution thermal
    visible/<id>.png          3-channel guide, same size as the thermal image
    edges/<id>/level<i>.png   edge maps at guide resolution
    splits/{train,test}.txt   one id per line (optional)
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..edges import EdgePyramid, extract_fallback_pyramid, load_pyramid
from ..errors import DatasetIntegrityError, InvalidArgument, LevelNotFound
from ..imageio import IMAGE_SUFFIXES, find_image, read_image
from .degrade import DegradationSpec, degrade

log = logging.getLogger(__name__)


@dataclass
class SamplePair:
    x_l: np.ndarray
    guide: np.ndarray
    edges: EdgePyramid
    x_h: np.ndarray
    id: str
    sigma: float = 0.0
    offset: tuple = (0, 0)  # HR (top, left) of the crop inside the source image
    meta: dict = field(default_factory=dict)

    @property
    def scale(self):
        return self.x_h.shape[0] // self.x_l.shape[0]

    def validate(self):
        lh, lw = self.x_l.shape[:2]
        hh, hw = self.x_h.shape[:2]
        if hh % lh or hw % lw or hh // lh != hw // lw:
            raise DatasetIntegrityError(f"{self.id}: x_h {hh}x{hw} is not a scaled x_l {lh}x{lw}")
        if self.guide.shape[:2] != (hh, hw):
            raise DatasetIntegrityError(f"{self.id}: guide {self.guide.shape[:2]} != x_h {(hh, hw)}")
        if self.edges.shape != (hh, hw):
            raise DatasetIntegrityError(f"{self.id}: edges {self.edges.shape} != x_h {(hh, hw)}")
        return self


def as_raster(data, channels=None):
    """Validate an H x W x C intensity array; 2-D input gains a channel axis."""
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] not in (1, 3):
        raise InvalidArgument(f"not a raster image: shape {arr.shape}")
    if channels is not None and arr.shape[2] != channels:
        raise InvalidArgument(f"expected {channels} channels, got {arr.shape[2]}")
    if not (np.all(arr >= 0.0) and np.all(arr <= 1.0)):
        raise InvalidArgument("raster values must lie in [0, 1]")
    return arr


def read_split(root, split):
    path = Path(root) / "splits" / f"{split}.txt"
    if not path.exists():
        raise DatasetIntegrityError(f"split manifest not found: {path}")
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def list_ids(root, split=None):
    if split is not None:
        return read_split(root, split)
    thermal = Path(root) / "thermal"
    if not thermal.is_dir():
        raise DatasetIntegrityError(f"no thermal/ directory under {root}")
    return sorted(p.stem for p in thermal.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_record(root, image_id, n_levels=5, fallback_edges=False):
    """Read (x_h, guide, edges) for one id, checking the pairing contract."""
    root = Path(root)
    thermal_path = find_image(root / "thermal", image_id)
    if thermal_path is None:
        raise DatasetIntegrityError(f"{image_id}: thermal image missing")
    guide_path = find_image(root / "visible", image_id)
    if guide_path is None:
        raise DatasetIntegrityError(f"{image_id}: visible guide image missing")
    x_h = read_image(thermal_path, channels=1)
    guide = read_image(guide_path, channels=3)
    if guide.shape[:2] != x_h.shape[:2]:
        raise DatasetIntegrityError(
            f"{image_id}: guide {guide.shape[:2]} does not match thermal {x_h.shape[:2]}"
        )
    if fallback_edges:
        edges = extract_fallback_pyramid(guide, n_levels)
    else:
        edge_dir = root / "edges" / image_id
        if not edge_dir.is_dir():
            raise DatasetIntegrityError(f"{image_id}: edge directory missing ({edge_dir})")
        try:
            edges = load_pyramid(edge_dir, n_levels)
        except LevelNotFound as exc:
            raise DatasetIntegrityError(f"{image_id}: {exc}") from exc
        if edges.shape != guide.shape[:2]:
            raise DatasetIntegrityError(f"{image_id}: edge maps {edges.shape} != guide {guide.shape[:2]}")
    return x_h, guide, edges


def random_crop(x_h, guide, edges, patch, scale, rng):
    """HR crop of ``patch`` pixels with offsets on the scale grid."""
    if patch % scale:
        raise InvalidArgument(f"patch {patch} must be a multiple of scale {scale}")
    h, w = x_h.shape[:2]
    if patch > h or patch > w:
        raise InvalidArgument(f"patch {patch} exceeds image {h}x{w}")
    top = scale * int(rng.integers(0, (h - patch) // scale + 1))
    left = scale * int(rng.integers(0, (w - patch) // scale + 1))
    sl = (slice(top, top + patch), slice(left, left + patch))
    return x_h[sl], guide[sl], edges.crop(top, left, patch, patch), (top, left)


def make_pair(x_h, guide, edges, spec, image_id="sample", patch=None, rng=None):
    offset = (0, 0)
    if patch is not None:
        x_h, guide, edges, offset = random_crop(x_h, guide, edges, patch, spec.scale, rng)
    x_l = degrade(x_h, spec).astype(np.float32)
    return SamplePair(
        x_l=x_l,
        guide=np.asarray(guide, dtype=np.float32),
        edges=edges,
        x_h=np.asarray(x_h, dtype=np.float32),
        id=image_id,
        sigma=spec.sigma,
        offset=offset,
    ).validate()


def make_dataset(root, spec, sigmas, patch=None, seed=0, split=None, n_levels=5, fallback_edges=False):
    """Yield one SamplePair per (image, sigma), in an order fixed by ``seed``.

    Images whose size is not divisible by ``spec.scale`` are skipped with a
    warning. Sample ids are ``<image id>@s<sigma>``.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise InvalidArgument("sigmas must be nonempty")
    ids = list_ids(root, split)
    rng = np.random.default_rng(seed)
    jobs = [(image_id, s) for image_id in ids for s in sigmas]
    order = rng.permutation(len(jobs))
    # one child seed per job so a pair's crop depends only on (seed, job)
    child_seeds = rng.integers(0, 2**63 - 1, size=len(jobs))
    cache = {}
    skipped = set()
    for j in order:
        image_id, sigma = jobs[j]
        if image_id in skipped:
            continue
        if image_id not in cache:
            cache.clear()
            record = load_record(root, image_id, n_levels, fallback_edges)
            h, w = record[0].shape[:2]
            if h % spec.scale or w % spec.scale:
                log.warning("skipping %s: %dx%d not divisible by scale %d", image_id, h, w, spec.scale)
                skipped.add(image_id)
                continue
            cache[image_id] = record
        x_h, guide, edges = cache[image_id]
        yield make_pair(
            x_h,
            guide,
            edges,
            DegradationSpec(sigma=sigma, scale=spec.scale),
            image_id=f"{image_id}@s{sigma:g}",
            patch=patch,
            rng=np.random.default_rng(child_seeds[j]),
        )
