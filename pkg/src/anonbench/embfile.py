"""In-memory embedding matrices and the EMB1 binary file format.

EMB1 layout (all integers little-endian):

    bytes 0-3    magic ASCII "EMB1"
    bytes 4-7    uint32 N  (row count)
    bytes 8-11   uint32 D  (dimension)
    id table     N entries: uint16 byte length + UTF-8 id bytes
    payload      N*D float32 values, row-major

The format is bit-exact: ``read_embeddings(write_embeddings(m))`` returns
every float with an identical bit pattern.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    DuplicateIdError,
    EmbeddingFormatError,
    TruncatedPayloadError,
)

MAGIC = b"EMB1"


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """N float32 row vectors of dimension D, keyed by image id.

    Immutable after construction (the array is marked read-only) so it can
    be shared freely across parallel workers.
    """

    ids: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError(f"embedding data must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if n < 1 or d < 1:
            raise ValueError(f"embedding matrix must be at least 1x1, got {n}x{d}")
        if len(ids) != n:
            raise ValueError(f"{len(ids)} ids for {n} rows")
        if len(set(ids)) != len(ids):
            raise DuplicateIdError("embedding matrix has duplicate ids")
        if not np.all(np.isfinite(data)):
            raise ValueError("embedding matrix contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row(self, image_id: str) -> np.ndarray:
        return self.data[self.index_of(image_id)]

    def index_of(self, image_id: str) -> int:
        try:
            return self._index[image_id]
        except AttributeError:
            object.__setattr__(self, "_index", {i: k for k, i in enumerate(self.ids)})
            return self._index[image_id]


def write_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Serialize a matrix to an EMB1 file."""
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", matrix.n, matrix.dim))
        for image_id in matrix.ids:
            raw = image_id.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise EmbeddingFormatError(f"id too long for EMB1 ({len(raw)} bytes): {image_id[:40]!r}...")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
        f.write(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())


def read_embeddings(path) -> EmbeddingMatrix:
    """Parse an EMB1 file, validating layout and payload length."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 12:
        raise TruncatedPayloadError(f"{path}: file too short for an EMB1 header")
    n, d = struct.unpack_from("<II", blob, 4)
    if n < 1 or d < 1:
        raise EmbeddingFormatError(f"{path}: declared shape {n}x{d} is invalid")

    offset = 12
    ids = []
    for _ in range(n):
        if offset + 2 > len(blob):
            raise TruncatedPayloadError(f"{path}: id table truncated")
        (length,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + length > len(blob):
            raise TruncatedPayloadError(f"{path}: id table truncated")
        ids.append(blob[offset : offset + length].decode("utf-8"))
        offset += length

    expected = n * d * 4
    payload = blob[offset:]
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected} for {n}x{d}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(n, d).copy()
    if not np.all(np.isfinite(data)):
        raise EmbeddingFormatError(f"{path}: payload contains non-finite values")
    return EmbeddingMatrix(tuple(ids), data)
