"""Reading and writing normalized raster images (PNG 8/16 bit, single-channel TIFF)."""

from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_SUFFIXES = (".png", ".tif", ".tiff")


def read_image(path, channels=None):
    """Load an image as a float32 H x W x C array scaled to [0, 1].

    Integer images are divided by the maximum of their storage type, so an
    8-bit 255 and a 16-bit 65535 both map to 1.0. ``channels`` forces 1
    (luma) or 3 (RGB).
    """
    path = Path(path)
    with Image.open(path) as im:
        if channels == 3 and im.mode not in ("RGB",):
            im = im.convert("RGB")
        arr = np.asarray(im)
    if arr.dtype == np.uint8:
        data = arr.astype(np.float32) / 255.0
    elif arr.dtype in (np.uint16, np.dtype(">u2"), np.dtype("<u2")):
        data = arr.astype(np.float32) / 65535.0
    elif arr.dtype == np.int32:
        # older Pillow reports 16-bit PNGs as mode "I"
        data = arr.astype(np.float32) / 65535.0
    elif arr.dtype == bool:
        data = arr.astype(np.float32)
    else:
        data = np.clip(arr.astype(np.float32), 0.0, 1.0)
    if data.ndim == 2:
        data = data[:, :, None]
    if channels == 1 and data.shape[2] != 1:
        data = to_gray(data)[:, :, None]
    elif channels == 3 and data.shape[2] == 1:
        data = np.repeat(data, 3, axis=2)
    return np.ascontiguousarray(data, dtype=np.float32)


def to_gray(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim == 3 and rgb.shape[2] == 1:
        return rgb[:, :, 0]
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def write_image(path, data, bits=16):
    """Write an H x W (x C) array in [0, 1] as PNG; values are clamped first.

    Single-channel images default to 16-bit, RGB is always 8-bit.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 3:
        Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="RGB").save(path)
    elif bits == 16:
        Image.fromarray(np.round(arr * 65535.0).astype(np.uint16)).save(path)
    else:
        Image.fromarray(np.round(arr * 255.0).astype(np.uint8)).save(path)
    return path


def find_image(directory, stem):
    for suffix in IMAGE_SUFFIXES:
        candidate = Path(directory) / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    return None
