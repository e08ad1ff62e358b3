"""Blur-downscale degradation and bicubic resampling.

Images are numpy arrays shaped (H, W) or (H, W, C). The bicubic resampler
also accepts torch tensors, where the last two axes are spatial; the model
uses that path for its skip connection so both routes share one weight table.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch

from ..errors import InvalidArgument

DEFAULT_SIGMAS = tuple(0.5 * i for i in range(9))  # 0.0, 0.5, ..., 4.0
CUBIC_A = -0.5


def default_radius(sigma):
    return max(1, int(math.ceil(3.0 * sigma)))


def _is_power_of_two(n):
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class DegradationSpec:
    sigma: float = 0.0
    scale: int = 4
    kernel_radius: int = None

    def __post_init__(self):
        if not self.sigma >= 0:
            raise InvalidArgument(f"sigma must be >= 0, got {self.sigma}")
        if not _is_power_of_two(self.scale):
            raise InvalidArgument(f"scale must be a power of two, got {self.scale}")
        if self.kernel_radius is None:
            object.__setattr__(self, "kernel_radius", default_radius(self.sigma))
        elif self.kernel_radius < math.ceil(3.0 * self.sigma):
            raise InvalidArgument(
                f"kernel_radius {self.kernel_radius} < ceil(3*sigma) for sigma={self.sigma}"
            )

    def with_sigma(self, sigma):
        return DegradationSpec(sigma=float(sigma), scale=self.scale)


def gaussian_kernel(sigma, radius):
    """Normalized (2r+1) x (2r+1) Gaussian; sigma=0 gives a delta."""
    if sigma < 0 or radius < 0:
        raise InvalidArgument(f"sigma and radius must be >= 0 (got {sigma}, {radius})")
    g = _gaussian_1d(sigma, int(radius))
    return np.outer(g, g)


def _gaussian_1d(sigma, radius):
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    if sigma == 0:
        g = (x == 0).astype(np.float64)
    else:
        g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _conv1d(img, taps, axis):
    r = (len(taps) - 1) // 2
    pad = [(0, 0)] * img.ndim
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="reflect")
    out = np.zeros_like(img)
    n = img.shape[axis]
    for t, w in enumerate(taps):
        if w == 0.0:
            continue
        out += w * np.take(padded, np.arange(t, t + n), axis=axis)
    return out


def gaussian_blur(img, sigma, radius=None):
    """Separable Gaussian blur with reflect (mirror, edge not repeated) padding."""
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    radius = default_radius(sigma) if radius is None else radius
    g = _gaussian_1d(sigma, radius)
    return _conv1d(_conv1d(img, g, 0), g, 1)


def cubic(x, a=CUBIC_A):
    ax = np.abs(x)
    ax2, ax3 = ax**2, ax**3
    return np.where(
        ax <= 1,
        (a + 2) * ax3 - (a + 3) * ax2 + 1,
        np.where(ax < 2, a * ax3 - 5 * a * ax2 + 8 * a * ax - 4 * a, 0.0),
    )


@lru_cache(maxsize=64)
def resample_matrix(in_size, out_size, antialias=True):
    """Dense (out_size, in_size) bicubic interpolation matrix.

    Pixel centres are aligned (half-pixel convention), the boundary is the
    half-sample symmetric mirror, and each row is normalized to sum to one.
    When shrinking with ``antialias`` the kernel is stretched by the inverse
    scale, as in the usual imresize downsampler.
    """
    scale = out_size / in_size
    width = 4.0
    if scale < 1 and antialias:
        kernel = lambda d: scale * cubic(scale * d)
        width = 4.0 / scale
    else:
        kernel = cubic
    x = np.arange(out_size, dtype=np.float64)
    centre = (x + 0.5) / scale - 0.5
    left = np.floor(centre - width / 2.0).astype(np.int64)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    weights = kernel(centre[:, None] - idx)
    weights /= weights.sum(axis=1, keepdims=True)
    period = 2 * in_size
    mirrored = np.mod(idx, period)
    mirrored = np.where(mirrored >= in_size, period - 1 - mirrored, mirrored)
    mat = np.zeros((out_size, in_size), dtype=np.float64)
    rows = np.repeat(np.arange(out_size), taps)
    np.add.at(mat, (rows, mirrored.ravel()), weights.ravel())
    mat.setflags(write=False)
    return mat


def resize(img, out_hw, antialias=True):
    """Bicubic resize of an HW/HWC numpy array or a (..., H, W) tensor."""
    oh, ow = out_hw
    if isinstance(img, torch.Tensor):
        h, w = img.shape[-2:]
        mh = torch.tensor(resample_matrix(h, oh, antialias), dtype=img.dtype)
        mw = torch.tensor(resample_matrix(w, ow, antialias), dtype=img.dtype)
        return torch.matmul(torch.matmul(mh, img), mw.T)
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    mh = resample_matrix(h, oh, antialias)
    mw = resample_matrix(w, ow, antialias)
    return np.einsum("ih,hw...,jw->ij...", mh, img, mw, optimize=True)


def _spatial(img):
    return tuple(img.shape[-2:]) if isinstance(img, torch.Tensor) else tuple(np.shape(img)[:2])


def upsample_bicubic(x, scale):
    """Bicubic upsampling by an integer factor (no clamping)."""
    if not isinstance(scale, (int, np.integer)) or scale < 1:
        raise InvalidArgument(f"scale must be an integer >= 1, got {scale}")
    if scale == 1:
        return x.clone() if isinstance(x, torch.Tensor) else np.array(x, dtype=np.float64)
    h, w = _spatial(x)
    return resize(x, (h * scale, w * scale))


def downsample_bicubic(x, scale):
    h, w = _spatial(x)
    if h % scale or w % scale:
        raise InvalidArgument(f"image {h}x{w} is not divisible by scale {scale}")
    return resize(x, (h // scale, w // scale), antialias=True)


def degrade(x_h, spec):
    """Gaussian blur (reflect padding) followed by bicubic downsampling, clamped to [0, 1]."""
    x_h = np.asarray(x_h, dtype=np.float64)
    h, w = x_h.shape[:2]
    if h % spec.scale or w % spec.scale:
        raise InvalidArgument(f"image {h}x{w} is not divisible by scale {spec.scale}")
    blurred = gaussian_blur(x_h, spec.sigma, spec.kernel_radius)
    return np.clip(downsample_bicubic(blurred, spec.scale), 0.0, 1.0)
