"""Small shared image helpers: PNG/JPEG I/O and bilinear resampling."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import DataError


def load_image(path) -> np.ndarray:
    """Read an image file into an (H, W, 3) uint8 array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(pixels: np.ndarray, path) -> None:
    """Write an (H, W) or (H, W, 3) uint8 array as PNG (or per-extension)."""
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        raise DataError(f"expected uint8 pixels, got {arr.dtype}")
    Image.fromarray(arr).save(path)


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize with align-corners bilinear interpolation.

    Corner pixels map exactly onto corner pixels, so a same-size resize is
    the identity. Works on (H, W) and (H, W, C) arrays; uint8 inputs come
    back as uint8 (rounded), float inputs keep their dtype.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]
    if h < 1 or w < 1 or out_h < 1 or out_w < 1:
        raise DataError("resize requires positive dimensions")
    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    out = sample_bilinear(image.astype(np.float64), *np.meshgrid(xs, ys))
    if image.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out.astype(image.dtype)


def sample_bilinear(image: np.ndarray, x: np.ndarray, y: np.ndarray,
                    wrap_x: bool = False) -> np.ndarray:
    """Sample `image` at fractional array coordinates (x=column, y=row).

    x wraps around horizontally when `wrap_x` (panorama seam), otherwise it
    clamps like y. Returns float64 with the sample-grid shape (plus channel
    axis when present).
    """
    h, w = image.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    x = np.mod(x, w) if wrap_x else np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)

    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0

    if wrap_x:
        x0 = np.mod(x0, w)
        x1 = np.mod(x0 + 1, w)
    else:
        x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)

    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]

    img = image.astype(np.float64, copy=False)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy
