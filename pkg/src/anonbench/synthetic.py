"""Seeded synthetic document corpora for desk-scale runs and tests.

Images are light pages with dark text-like stroke rows; every stroke row
gets a bounding box of kind "text", so anonymization degrees map onto a
meaningful number of regions. The class label is the page layout template
(where the text blocks sit), which gives downstream classifiers a signal
that survives in the embedder's layout channel.
"""

from __future__ import annotations

import os

import numpy as np

from ._validation import derive_rng
from .images import save_image
from .manifest import BoundingBox, DatasetManifest, ImageRecord, load_manifest, save_manifest
from .probes import write_labels_csv

# per template: (y_start, y_end, n_lines, x_margin) bands, fractions of page size
_TEMPLATES = (
    ((0.08, 0.92, 8, 0.08),),                       # lines spread over the page
    ((0.08, 0.34, 4, 0.08), (0.64, 0.90, 4, 0.08)), # two dense blocks
    ((0.06, 0.22, 2, 0.06), (0.40, 0.88, 4, 0.20)), # wide header, indented body
    ((0.34, 0.66, 6, 0.24),),                       # centered narrow block
)


def _draw_page(rng: np.random.Generator, width: int, height: int, template: int):
    bg = int(rng.integers(228, 253))
    tint = rng.integers(-4, 5, size=3)
    img = np.clip(bg + tint, 0, 255).astype(np.uint8) * np.ones((height, width, 3), dtype=np.uint8)

    boxes = []
    for y_start, y_end, n_lines, margin_frac in _TEMPLATES[template % len(_TEMPLATES)]:
        ys = np.linspace(y_start * height, y_end * height, n_lines, endpoint=False)
        for y_base in ys:
            y = int(y_base) + int(rng.integers(-2, 3))
            line_h = int(rng.integers(3, 6))
            y = max(1, min(y, height - line_h - 1))
            margin = max(2, int(margin_frac * width) + int(rng.integers(-3, 4)))
            shade = int(rng.integers(15, 70))

            x = margin
            x_last = margin
            while x < width - margin - 4:
                word = int(rng.integers(6, 18))
                word = min(word, width - margin - x)
                img[y : y + line_h, x : x + word] = shade
                x_last = x + word
                x += word + int(rng.integers(3, 7))
            boxes.append(
                BoundingBox(
                    x=max(0, margin - 1),
                    y=max(0, y - 1),
                    w=min(width, x_last + 1) - max(0, margin - 1),
                    h=min(height, y + line_h + 1) - max(0, y - 1),
                    kind="text",
                )
            )
    return img, boxes


def make_document_corpus(
    out_dir,
    count: int,
    seed: int,
    width: int = 128,
    height: int = 128,
    n_classes: int = 4,
    name: str = "synthetic-docs",
    split: str = "validation",
) -> DatasetManifest:
    """Generate a corpus on disk and return its validated manifest.

    Writes ``images/<id>.png``, ``manifest.json`` and ``labels.csv`` under
    ``out_dir``. Fully determined by the arguments.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not (2 <= n_classes <= len(_TEMPLATES)):
        raise ValueError(f"n_classes must be in [2, {len(_TEMPLATES)}], got {n_classes}")
    out_dir = os.fspath(out_dir)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)

    records = []
    labels = {}
    for index in range(count):
        rng = derive_rng(seed, "corpus", split, index)
        label = index % n_classes
        img, boxes = _draw_page(rng, width, height, label)
        image_id = f"img_{index:05d}"
        rel_path = f"images/{image_id}.png"
        save_image(img, os.path.join(out_dir, rel_path))
        records.append(ImageRecord(image_id, rel_path, tuple(boxes), label))
        labels[image_id] = label

    manifest_path = os.path.join(out_dir, "manifest.json")
    save_manifest(
        DatasetManifest(name=name, split=split, records=tuple(records)), manifest_path
    )
    write_labels_csv(labels, os.path.join(out_dir, "labels.csv"))
    return load_manifest(manifest_path)
