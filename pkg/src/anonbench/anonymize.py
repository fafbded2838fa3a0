"""Pixelation, Gaussian blur, and masking over bounding boxes.

All operations are pure: they return a new image and leave every pixel
outside the targeted boxes bit-identical to the input. Box selection for
partial anonymization is a seeded-permutation prefix, so for a fixed seed
the regions anonymized at degree p are a subset of those at degree q >= p
and a degree sweep differs only in added regions.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_fraction, check_rgb_image
from .manifest import BoundingBox

METHODS = ("pixel", "blur", "mask")


def select_boxes(boxes: Sequence[BoundingBox], degree: float, seed: int) -> list[BoundingBox]:
    """Choose round_half_up(degree * len(boxes)) boxes, uniformly, seeded.

    The selection is the prefix of a seeded permutation, which makes it
    monotone in ``degree``; input order is preserved in the result.
    """
    check_fraction(degree, "degree")
    n = len(boxes)
    count = int(math.floor(degree * n + 0.5))
    if count == 0:
        return []
    order = np.random.default_rng(int(seed)).permutation(n)
    chosen = set(order[:count].tolist())
    return [b for i, b in enumerate(boxes) if i in chosen]


def _clip_to_image(img: np.ndarray, box: BoundingBox):
    h, w = img.shape[:2]
    clipped = box.clipped(w, h)
    if clipped is None:
        return None
    return clipped.x, clipped.y, clipped.x + clipped.w, clipped.y + clipped.h


def _pixelate_inplace(img: np.ndarray, box: BoundingBox, block: int) -> None:
    span = _clip_to_image(img, box)
    if span is None:
        return
    x0, y0, x1, y1 = span
    for ty in range(y0, y1, block):
        for tx in range(x0, x1, block):
            tile = img[ty : min(ty + block, y1), tx : min(tx + block, x1)]
            count = tile.shape[0] * tile.shape[1]
            sums = tile.sum(axis=(0, 1), dtype=np.int64)
            # integer mean rounded half away from zero; exact on all platforms
            tile[:, :] = ((2 * sums + count) // (2 * count)).astype(np.uint8)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(2.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def _blur_inplace(img: np.ndarray, box: BoundingBox, sigma_factor: float) -> None:
    span = _clip_to_image(img, box)
    if span is None:
        return
    x0, y0, x1, y1 = span
    sigma = sigma_factor * min(x1 - x0, y1 - y0)
    if sigma < 0.5:
        warnings.warn(
            f"box {box.x},{box.y},{box.w}x{box.h} too small to blur (sigma={sigma:.3f}); left unchanged",
            stacklevel=3,
        )
        return
    kernel = _gaussian_kernel(sigma)
    radius = (len(kernel) - 1) // 2

    # Separable convolution on the crop only, edge-replicate padding, so the
    # locality contract (pixels outside the box untouched) holds exactly.
    crop = img[y0:y1, x0:x1].astype(np.float64)
    padded = np.pad(crop, ((radius, radius), (0, 0), (0, 0)), mode="edge")
    tmp = np.zeros_like(crop)
    for i, weight in enumerate(kernel):
        tmp += weight * padded[i : i + crop.shape[0]]
    padded = np.pad(tmp, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(crop)
    for i, weight in enumerate(kernel):
        out += weight * padded[:, i : i + crop.shape[1]]
    img[y0:y1, x0:x1] = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def _mask_inplace(img: np.ndarray, box: BoundingBox, fill) -> None:
    span = _clip_to_image(img, box)
    if span is None:
        return
    x0, y0, x1, y1 = span
    img[y0:y1, x0:x1] = np.asarray(fill, dtype=np.uint8)


def pixelate_region(img: np.ndarray, box: BoundingBox, block: int = 8) -> np.ndarray:
    """Replace each block x block tile inside the box by its channel mean.

    Tiles are anchored at the box origin with edge tiles truncated; means
    are rounded half away from zero, making the operation idempotent.
    """
    if block < 1:
        raise ValueError(f"block must be >= 1, got {block}")
    out = check_rgb_image(img).copy()
    _pixelate_inplace(out, box, int(block))
    return out


def blur_region(img: np.ndarray, box: BoundingBox, sigma_factor: float = 0.25) -> np.ndarray:
    """Gaussian-blur the box interior with sigma = sigma_factor * min(w, h).

    Kernel radius is ceil(2 sigma) with weights normalized to sum 1. Boxes
    whose sigma falls below 0.5 are left unchanged with a warning.
    """
    if sigma_factor <= 0:
        raise ValueError(f"sigma_factor must be > 0, got {sigma_factor}")
    out = check_rgb_image(img).copy()
    _blur_inplace(out, box, float(sigma_factor))
    return out


def mask_region(img: np.ndarray, box: BoundingBox, fill=(0, 0, 0)) -> np.ndarray:
    """Fill the box interior with a constant RGB color. Idempotent."""
    out = check_rgb_image(img).copy()
    _mask_inplace(out, box, _check_fill(fill))
    return out


def _check_fill(fill) -> tuple[int, int, int]:
    vals = tuple(int(v) for v in fill)
    if len(vals) != 3 or any(not (0 <= v <= 255) for v in vals):
        raise ValueError(f"mask fill must be an RGB triple in [0, 255], got {fill!r}")
    return vals


class Anonymizer(BaseEstimator):
    """Configurable anonymization of a fraction of an image's boxes.

    Stateless sklearn-style estimator: parameters are the anonymization
    spec, ``fit`` is a no-op and ``transform`` maps (image, boxes) pairs to
    anonymized images. Output is fully determined by (image, boxes, params).

    Overlapping boxes are processed sequentially, so overlap regions
    receive the method more than once: harmless for masking, visible for
    blur, and re-tiled (with the later box's anchor) for pixelation.

    Parameters
    ----------
    method : {"pixel", "blur", "mask"}
    degree : float in [0, 1]
        Fraction of boxes to anonymize (count rounded half up).
    seed : int
        Seeds the box-selection permutation.
    pixel_block : int, side length of pixelation tiles.
    blur_sigma_factor : float, sigma as a fraction of min(box w, box h).
    mask_fill : RGB triple used by the mask method.
    """

    def __init__(
        self,
        method: str = "mask",
        degree: float = 1.0,
        seed: int = 0,
        pixel_block: int = 8,
        blur_sigma_factor: float = 0.25,
        mask_fill=(0, 0, 0),
    ):
        self.method = method
        self.degree = degree
        self.seed = seed
        self.pixel_block = pixel_block
        self.blur_sigma_factor = blur_sigma_factor
        self.mask_fill = mask_fill

    def _check_params(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        check_fraction(self.degree, "degree")
        if int(self.pixel_block) < 1:
            raise ValueError(f"pixel_block must be >= 1, got {self.pixel_block}")
        if float(self.blur_sigma_factor) <= 0:
            raise ValueError(f"blur_sigma_factor must be > 0, got {self.blur_sigma_factor}")
        _check_fill(self.mask_fill)

    def fit(self, X=None, y=None):
        self._check_params()
        return self

    def apply(self, img: np.ndarray, boxes: Sequence[BoundingBox], seed: int | None = None) -> np.ndarray:
        """Anonymize one image; ``seed`` overrides the configured seed."""
        self._check_params()
        out = check_rgb_image(img).copy()
        use_seed = self.seed if seed is None else seed
        for box in select_boxes(boxes, self.degree, use_seed):
            if self.method == "pixel":
                _pixelate_inplace(out, box, int(self.pixel_block))
            elif self.method == "blur":
                _blur_inplace(out, box, float(self.blur_sigma_factor))
            else:
                _mask_inplace(out, box, _check_fill(self.mask_fill))
        return out

    def transform(self, X):
        """Anonymize a sequence of (image, boxes) pairs."""
        return [self.apply(img, boxes) for img, boxes in X]


def anonymize_image(img: np.ndarray, boxes: Sequence[BoundingBox], spec: Anonymizer) -> np.ndarray:
    """Apply ``spec`` to the selected subset of ``boxes`` on ``img``."""
    return spec.apply(img, boxes)
