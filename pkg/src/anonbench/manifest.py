"""Dataset manifests: image records with sensitive-region bounding boxes.

A manifest is a JSON file::

    {
      "name": "my-dataset",
      "split": "validation",
      "records": [
        {"id": "img0", "path": "images/img0.png", "label": 3,
         "boxes": [{"x": 10, "y": 4, "w": 32, "h": 12, "kind": "text"}]}
      ]
    }

Record paths are resolved relative to the manifest file's directory.
Boxes partially outside the image are clipped on load; boxes with no
overlap at all are treated as malformed. Loaded structures are immutable
and safe to share read-only across parallel workers.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import (
    DuplicateIdError,
    EmptyManifestError,
    MalformedBoxError,
    MissingImageError,
)
from .images import image_size

BOX_KINDS = ("face", "text", "barcode", "mrz", "other")
SPLITS = ("train", "validation")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel rectangle over a sensitive region.

    Coordinates are validated (x, y >= 0 and w, h >= 1); clipping against
    image bounds happens before construction, at manifest-load time.
    """

    x: int
    y: int
    w: int
    h: int
    kind: str = "other"

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise MalformedBoxError(f"box origin must be non-negative, got ({self.x}, {self.y})")
        if self.w < 1 or self.h < 1:
            raise MalformedBoxError(f"box size must be at least 1x1, got {self.w}x{self.h}")
        if self.kind not in BOX_KINDS:
            raise MalformedBoxError(f"unknown box kind {self.kind!r}, expected one of {BOX_KINDS}")

    @property
    def area(self) -> int:
        return self.w * self.h

    def clipped(self, width: int, height: int) -> "BoundingBox | None":
        """Intersection with an image of the given size, or None if empty."""
        x0 = max(self.x, 0)
        y0 = max(self.y, 0)
        x1 = min(self.x + self.w, width)
        y1 = min(self.y + self.h, height)
        if x1 <= x0 or y1 <= y0:
            return None
        return BoundingBox(x0, y0, x1 - x0, y1 - y0, self.kind)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h, "kind": self.kind}


@dataclass(frozen=True)
class ImageRecord:
    """One image plus its annotated boxes and optional class label."""

    id: str
    path: str
    boxes: tuple[BoundingBox, ...] = ()
    label: int | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "path": self.path,
            "label": self.label,
            "boxes": [b.to_dict() for b in self.boxes],
        }


@dataclass(frozen=True)
class DatasetManifest:
    """An ordered, validated collection of image records.

    ``dropped_ids`` lists records removed at load time because they carried
    no boxes (only when ``drop_empty`` was requested).
    """

    name: str
    split: str
    records: tuple[ImageRecord, ...]
    dropped_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if not self.records:
            raise EmptyManifestError(f"manifest {self.name!r} holds no records")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.records)

    @property
    def dropped_count(self) -> int:
        return len(self.dropped_ids)

    @property
    def zero_box_ids(self) -> tuple[str, ...]:
        """Ids of retained records that carry no boxes."""
        return tuple(r.id for r in self.records if not r.boxes)


def _clip_raw_box(raw: dict, width: int, height: int, where: str) -> BoundingBox:
    try:
        x, y = int(raw["x"]), int(raw["y"])
        w, h = int(raw["w"]), int(raw["h"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedBoxError(f"{where}: box needs integer x/y/w/h, got {raw!r}") from exc
    if w < 1 or h < 1:
        raise MalformedBoxError(f"{where}: box size must be at least 1x1, got {w}x{h}")
    kind = raw.get("kind", "other")
    # Detectors routinely overshoot image borders; clip rather than reject.
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, width), min(y + h, height)
    if x1 <= x0 or y1 <= y0:
        raise MalformedBoxError(f"{where}: box {x},{y},{w}x{h} lies fully outside {width}x{height} image")
    return BoundingBox(x0, y0, x1 - x0, y1 - y0, kind)


def load_manifest(path, drop_empty: bool = False) -> DatasetManifest:
    """Load and validate a manifest JSON file.

    Every referenced image must exist; boxes are clipped to the image
    bounds. With ``drop_empty=True`` records without any box are removed
    and reported via ``DatasetManifest.dropped_ids``.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingImageError(f"manifest file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)

    base_dir = os.path.dirname(os.path.abspath(path))
    raw_records = doc.get("records", [])
    if not raw_records:
        raise EmptyManifestError(f"manifest {path} lists no records")

    seen: set[str] = set()
    records: list[ImageRecord] = []
    dropped: list[str] = []
    for raw in raw_records:
        rec_id = str(raw["id"])
        if rec_id in seen:
            raise DuplicateIdError(f"duplicate record id {rec_id!r} in {path}")
        seen.add(rec_id)

        img_path = raw["path"]
        if not os.path.isabs(img_path):
            img_path = os.path.join(base_dir, img_path)
        if not os.path.isfile(img_path):
            raise MissingImageError(f"record {rec_id!r}: image not found at {img_path}")
        width, height = image_size(img_path)

        boxes = tuple(
            _clip_raw_box(b, width, height, f"record {rec_id!r}") for b in raw.get("boxes", [])
        )
        if drop_empty and not boxes:
            dropped.append(rec_id)
            continue
        label = raw.get("label")
        records.append(
            ImageRecord(rec_id, img_path, boxes, None if label is None else int(label))
        )

    if not records:
        raise EmptyManifestError(f"manifest {path} is empty after dropping box-less records")
    return DatasetManifest(
        name=str(doc.get("name", "unnamed")),
        split=str(doc.get("split", "validation")),
        records=tuple(records),
        dropped_ids=tuple(dropped),
    )


def save_manifest(manifest: DatasetManifest, path, relative_to=None) -> None:
    """Write a manifest as JSON.

    With ``relative_to`` set, record paths are stored relative to that
    directory, which keeps experiment bundles free of absolute paths.
    """
    path = os.fspath(path)
    records = []
    for rec in manifest.records:
        d = rec.to_dict()
        if relative_to is not None:
            d["path"] = os.path.relpath(rec.path, os.fspath(relative_to)).replace(os.sep, "/")
        records.append(d)
    doc = {"name": manifest.name, "split": manifest.split, "records": records}
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
