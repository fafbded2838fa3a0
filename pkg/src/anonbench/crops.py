"""Deterministic (global, local) crop sampling with source-variant tags.

The sampler produces crop *specifications* (geometry plus a tag saying
whether the crop is to be taken from the original or the anonymized
version of the image); actual resampling is left to the image layer.
Adaption tags control the pairing:

    A     globals from the original image, locals from the anonymized one
    B     globals from the anonymized image, locals from the original one
    C     every crop from the anonymized image
    none  every crop from the original image (unadapted baseline)

Crop regions are sampled independently of each other; a global crop from
the original and a local crop from the anonymized variant do not share
pixel coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import derive_rng
from .errors import ImageTooSmallError
from .manifest import BoundingBox

GLOBAL_SIZE = 224
LOCAL_SIZE = 96
MIN_IMAGE_SIDE = 96
LOCAL_MIN_AREA = 0.05
ASPECT_RANGE = (0.75, 4.0 / 3.0)

# adaption tag -> (source of global crops, source of local crops)
ADAPTION_SOURCES = {
    "A": ("original", "anonymized"),
    "B": ("anonymized", "original"),
    "C": ("anonymized", "anonymized"),
    "none": ("original", "original"),
}


@dataclass(frozen=True)
class CropSpec:
    """One crop: region inside the source image plus resampling target."""

    region: BoundingBox
    output_size: int
    source: str  # "original" | "anonymized"
    area_fraction: float

    def to_dict(self) -> dict:
        return {
            "region": self.region.to_dict(),
            "output_size": self.output_size,
            "source": self.source,
            "area_fraction": self.area_fraction,
        }


@dataclass(frozen=True)
class AdaptionBatch:
    """All crops sampled from one image under one adaption tag."""

    image_id: str
    adaption: str
    globals: tuple[CropSpec, ...]
    locals: tuple[CropSpec, ...]

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "adaption": self.adaption,
            "globals": [c.to_dict() for c in self.globals],
            "locals": [c.to_dict() for c in self.locals],
        }


def _place(rng: np.random.Generator, image_w: int, image_h: int, w: int, h: int) -> BoundingBox:
    x = int(rng.integers(0, image_w - w + 1))
    y = int(rng.integers(0, image_h - h + 1))
    return BoundingBox(x, y, w, h, "other")


def sample_crop(image_w: int, image_h: int, kind: str, rng: np.random.Generator) -> CropSpec:
    """Draw one crop region of the requested kind.

    Global crops cover more than half the image area, local crops less
    than half (and at least LOCAL_MIN_AREA); aspect ratios are drawn from
    ASPECT_RANGE. After 20 rejected draws (rounding can push the realized
    area out of range on extreme image shapes) a deterministic fallback
    region is used.
    """
    if kind not in ("global", "local"):
        raise ValueError(f"kind must be 'global' or 'local', got {kind!r}")
    if image_w < MIN_IMAGE_SIDE or image_h < MIN_IMAGE_SIDE:
        raise ImageTooSmallError(
            f"image {image_w}x{image_h} too small to crop (need at least "
            f"{MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE})"
        )
    area = image_w * image_h
    out_size = GLOBAL_SIZE if kind == "global" else LOCAL_SIZE

    for _ in range(20):
        if kind == "global":
            frac = 1.0 - rng.random() * 0.5  # (0.5, 1.0]
        else:
            frac = rng.uniform(LOCAL_MIN_AREA, 0.5)  # [0.05, 0.5)
        aspect = rng.uniform(*ASPECT_RANGE)
        w = round(math.sqrt(frac * area * aspect))
        h = round(math.sqrt(frac * area / aspect))
        if not (1 <= w <= image_w and 1 <= h <= image_h):
            continue
        realized = (w * h) / area
        if kind == "global" and realized > 0.5:
            return CropSpec(_place(rng, image_w, image_h, w, h), out_size, "original", realized)
        if kind == "local" and LOCAL_MIN_AREA <= realized < 0.5:
            return CropSpec(_place(rng, image_w, image_h, w, h), out_size, "original", realized)

    if kind == "global":
        region = BoundingBox(0, 0, image_w, image_h, "other")
        return CropSpec(region, out_size, "original", 1.0)
    w, h = round(image_w / 2), round(image_h / 2)
    return CropSpec(_place(rng, image_w, image_h, w, h), out_size, "original", (w * h) / area)


def make_adaption_batch(
    image_id: str,
    adaption: str,
    n_global: int,
    n_local: int,
    seed: int,
    image_w: int = 256,
    image_h: int = 256,
) -> AdaptionBatch:
    """Sample a full crop batch for one image under an adaption tag.

    Deterministic in all arguments; ``image_id`` is folded into the seed so
    different images of one run get independent geometry.
    """
    if adaption not in ADAPTION_SOURCES:
        raise ValueError(f"unknown adaption {adaption!r}, expected one of {sorted(ADAPTION_SOURCES)}")
    if n_global < 2:
        raise ValueError(f"n_global must be >= 2, got {n_global}")
    if n_local < 0:
        raise ValueError(f"n_local must be >= 0, got {n_local}")

    global_src, local_src = ADAPTION_SOURCES[adaption]
    rng = derive_rng(seed, "crops", image_id)
    globals_ = tuple(
        _retag(sample_crop(image_w, image_h, "global", rng), global_src) for _ in range(n_global)
    )
    locals_ = tuple(
        _retag(sample_crop(image_w, image_h, "local", rng), local_src) for _ in range(n_local)
    )
    return AdaptionBatch(image_id, adaption, globals_, locals_)


def _retag(crop: CropSpec, source: str) -> CropSpec:
    return CropSpec(crop.region, crop.output_size, source, crop.area_fraction)
