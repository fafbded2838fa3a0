"""PNG image I/O and pixel-level helpers.

Images are plain numpy arrays: shape (H, W, 3), dtype uint8, RGB order.
PNG is used throughout because the test suite and the determinism
contract require lossless, bit-exact round trips.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from ._validation import check_rgb_image


def load_image(path) -> np.ndarray:
    """Load an image file as an (H, W, 3) uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_image(img: np.ndarray, path) -> None:
    """Write an RGB array as PNG, creating parent directories as needed."""
    arr = check_rgb_image(img)
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def image_size(path) -> tuple[int, int]:
    """Return (width, height) without decoding pixel data."""
    with Image.open(path) as im:
        return im.size


def luminance(img: np.ndarray) -> np.ndarray:
    """Per-pixel luminance: round(0.299 R + 0.587 G + 0.114 B).

    Rounding is half-away-from-zero so the result is platform independent.
    Returns an (H, W) uint8 array.
    """
    arr = check_rgb_image(img).astype(np.float64)
    lum = 0.299 * arr[:, :, 0] + 0.587 * arr[:, :, 1] + 0.114 * arr[:, :, 2]
    return np.floor(lum + 0.5).astype(np.uint8)
