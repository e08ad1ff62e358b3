"""Multi-level edge maps of the visible guide image.

Precomputed maps from a learned edge detector are loaded from
``<dir>/level<i>.png``. Without them, :func:`extract_fallback_pyramid` builds a
classical pyramid: Sobel magnitude of the grayscale guide after Gaussian blurs
of growing width, level 1 being the finest.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data.degrade import gaussian_blur
from .errors import DatasetIntegrityError, InvalidArgument, LevelNotFound
from .imageio import find_image, read_image, to_gray, write_image

DEFAULT_LEVELS = 5


@dataclass
class EdgePyramid:
    levels: list

    def __post_init__(self):
        self.levels = [np.asarray(l, dtype=np.float32).reshape(np.shape(l)[:2]) for l in self.levels]
        if not self.levels:
            raise InvalidArgument("edge pyramid needs at least one level")
        shape = self.levels[0].shape
        for i, level in enumerate(self.levels, start=1):
            if level.shape != shape:
                raise DatasetIntegrityError(
                    f"edge level {i} has shape {level.shape}, level 1 has {shape}"
                )

    @property
    def n(self):
        return len(self.levels)

    @property
    def shape(self):
        return self.levels[0].shape

    def crop(self, top, left, height, width):
        return EdgePyramid([l[top : top + height, left : left + width] for l in self.levels])


def level_sigmas(n):
    """Blur widths per level: 0, 1, 3, 7, 15, ..."""
    return [float(2 ** (i - 1) - 1) for i in range(1, n + 1)]


def sobel_magnitude(gray):
    g = np.pad(np.asarray(gray, dtype=np.float64), 1, mode="reflect")
    # correlation with [[-1,0,1],[-2,0,2],[-1,0,1]] and its transpose
    gx = (g[:-2, 2:] + 2 * g[1:-1, 2:] + g[2:, 2:]) - (g[:-2, :-2] + 2 * g[1:-1, :-2] + g[2:, :-2])
    gy = (g[2:, :-2] + 2 * g[2:, 1:-1] + g[2:, 2:]) - (g[:-2, :-2] + 2 * g[:-2, 1:-1] + g[:-2, 2:])
    return np.hypot(gx, gy)


def extract_fallback_pyramid(guide, n=DEFAULT_LEVELS):
    guide = np.asarray(guide)
    if n < 1:
        raise InvalidArgument(f"number of levels must be >= 1, got {n}")
    if guide.ndim != 3 or guide.shape[2] != 3:
        raise InvalidArgument(f"guide must be H x W x 3, got shape {guide.shape}")
    gray = to_gray(guide)
    levels = []
    for sigma in level_sigmas(n):
        mag = sobel_magnitude(gaussian_blur(gray, sigma))
        peak = mag.max()
        # tolerance keeps round-off on flat images from being stretched to 1
        levels.append(mag / peak if peak > 1e-12 else np.zeros_like(mag))
    return EdgePyramid(levels)


def load_pyramid(directory, n=DEFAULT_LEVELS):
    directory = Path(directory)
    levels = []
    for i in range(1, n + 1):
        path = find_image(directory, f"level{i}")
        if path is None:
            raise LevelNotFound(f"edge level {i} not found in {directory}")
        levels.append(read_image(path, channels=1)[:, :, 0])
    return EdgePyramid(levels)


def save_pyramid(pyramid, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [write_image(directory / f"level{i}.png", l, bits=16) for i, l in enumerate(pyramid.levels, 1)]


def stack(pyramid):
    """H x W x n array, channel i holding level i+1."""
    return np.stack(pyramid.levels, axis=2)


def unstack(image):
    image = np.asarray(image)
    return EdgePyramid([image[:, :, i] for i in range(image.shape[2])])
