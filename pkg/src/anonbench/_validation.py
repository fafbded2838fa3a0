"""Input-validation helpers and seed derivation.

Every public estimator/function funnels its array inputs through these
checks so error messages stay uniform across the package.
"""

from __future__ import annotations

import hashlib

import numpy as np


def check_rgb_image(img, name: str = "image") -> np.ndarray:
    """Validate an 8-bit RGB raster of shape (H, W, 3) and return it."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"{name} must be uint8, got {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1 pixels")
    return arr


def check_vector(v, name: str = "vector", dim: int | None = None) -> np.ndarray:
    """Validate a finite 1-D vector and return it as float64."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} must have dimension {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_matrix(x, name: str = "X") -> np.ndarray:
    """Validate a finite 2-D matrix and return it as float64."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_fraction(x, name: str, low: float = 0.0, high: float = 1.0) -> float:
    """Validate a scalar inside [low, high]."""
    val = float(x)
    if not (low <= val <= high):
        raise ValueError(f"{name} must be in [{low}, {high}], got {val}")
    return val


def derive_seed(seed: int, *tokens) -> int:
    """Derive a stable 64-bit substream seed from a master seed and tokens.

    Hash-based so different stages/items of one run get decorrelated yet
    fully reproducible streams. Stable across platforms and runs.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode("utf-8"))
    for tok in tokens:
        h.update(b"\x1f")
        h.update(str(tok).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def derive_rng(seed: int, *tokens) -> np.random.Generator:
    """Seeded generator for the substream named by ``tokens``."""
    return np.random.default_rng(derive_seed(seed, *tokens))
