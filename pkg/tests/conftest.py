import numpy as np
import pytest

from anonbench.images import save_image
from anonbench.manifest import load_manifest
from anonbench.synthetic import make_document_corpus


@pytest.fixture(scope="session")
def doc_corpus(tmp_path_factory):
    """500 synthetic document pages with text-stroke boxes, seeded."""
    root = tmp_path_factory.mktemp("corpus")
    return make_document_corpus(root, count=500, seed=20240601)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A small labeled corpus pair (train + validation) for pipeline tests."""
    root = tmp_path_factory.mktemp("small")
    val = make_document_corpus(root / "val", count=60, seed=41, split="validation")
    train = make_document_corpus(root / "train", count=60, seed=42, split="train")
    return {"root": root, "val": val, "train": train}


def random_image(rng, height, width):
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)


def write_manifest_json(path, doc):
    import json

    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture()
def tiny_manifest(tmp_path):
    """Three small images on disk plus a well-formed manifest file."""
    rng = np.random.default_rng(7)
    images_dir = tmp_path / "images"
    for name in ("a", "b", "c"):
        save_image(random_image(rng, 32, 48), images_dir / f"{name}.png")
    doc = {
        "name": "tiny",
        "split": "validation",
        "records": [
            {"id": "a", "path": "images/a.png", "label": 0,
             "boxes": [{"x": 2, "y": 3, "w": 10, "h": 5, "kind": "text"}]},
            {"id": "b", "path": "images/b.png", "label": 1,
             "boxes": [{"x": -4, "y": -2, "w": 12, "h": 6, "kind": "face"},
                       {"x": 40, "y": 20, "w": 20, "h": 20, "kind": "other"}]},
            {"id": "c", "path": "images/c.png", "label": 0, "boxes": []},
        ],
    }
    manifest_path = write_manifest_json(tmp_path / "manifest.json", doc)
    return {"path": manifest_path, "dir": tmp_path, "load": lambda **kw: load_manifest(manifest_path, **kw)}
