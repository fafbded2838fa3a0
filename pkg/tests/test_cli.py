import json
import os

import numpy as np
import pytest

from anonbench.cli import main
from anonbench.embfile import read_embeddings
from anonbench.images import load_image
from anonbench.manifest import load_manifest
from anonbench.retrieval import read_rankings


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared scratch dir with a demo corpus already generated."""
    root = tmp_path_factory.mktemp("cli")
    rc = main([
        "demo-data", "--out", str(root / "corpus"),
        "--val-count", "30", "--train-count", "30", "--seed", "3",
    ])
    assert rc == 0
    return root


def test_demo_data_writes_labeled_corpus(workspace):
    manifest = load_manifest(workspace / "corpus" / "val" / "manifest.json")
    assert len(manifest) == 30
    assert all(r.label is not None and r.boxes for r in manifest.records)
    assert os.path.isfile(workspace / "corpus" / "val" / "labels.csv")


def test_anonymize_subcommand(workspace):
    out = workspace / "anon_mask"
    rc = main([
        "anonymize", "--manifest", str(workspace / "corpus" / "val" / "manifest.json"),
        "--method", "mask", "--degree", "1.0", "--seed", "4", "--out", str(out),
    ])
    assert rc == 0
    variant = load_manifest(out / "manifest.json")
    assert variant.ids == load_manifest(workspace / "corpus" / "val" / "manifest.json").ids
    # masked regions really are black
    record = variant.records[0]
    img = load_image(record.path)
    box = record.boxes[0]
    assert np.all(img[box.y : box.y + box.h, box.x : box.x + box.w] == 0)


def test_embed_retrieve_score_pipeline(workspace):
    corpus = workspace / "corpus" / "val"
    assert main(["embed", "--manifest", str(corpus / "manifest.json"),
                 "--out", str(workspace / "val.emb1")]) == 0
    matrix = read_embeddings(workspace / "val.emb1")
    assert matrix.n == 30 and matrix.dim == 576

    assert main(["retrieve", "--query", str(workspace / "val.emb1"),
                 "--db", str(workspace / "val.emb1"),
                 "--out", str(workspace / "baseline.jsonl")]) == 0
    rankings = read_rankings(workspace / "baseline.jsonl")
    assert len(rankings) == 30
    assert all(len(r) == 29 for r in rankings)  # self excluded

    assert main(["score", "--rankings", str(workspace / "baseline.jsonl"),
                 "--baseline", str(workspace / "baseline.jsonl"),
                 "--out", str(workspace / "report.json"),
                 "--scenario", "baseline-self"]) == 0
    report = json.loads((workspace / "report.json").read_text())
    assert report["map"] == 100.0
    assert report["mndcg"] == 100.0
    assert report["cutoff_p"] == 1
    assert report["scenario"]["label"] == "baseline-self"


def test_retrieve_top_frac_truncates(workspace):
    assert main(["retrieve", "--query", str(workspace / "val.emb1"),
                 "--db", str(workspace / "val.emb1"),
                 "--top-frac", "0.1",
                 "--out", str(workspace / "top.jsonl")]) == 0
    rankings = read_rankings(workspace / "top.jsonl")
    assert all(len(r) == 3 for r in rankings)


def test_classify_subcommand(workspace, capsys):
    corpus = workspace / "corpus"
    assert main(["embed", "--manifest", str(corpus / "train" / "manifest.json"),
                 "--out", str(workspace / "train.emb1")]) == 0
    rc = main([
        "classify", "--train", str(workspace / "train.emb1"),
        "--train-labels", str(corpus / "train" / "labels.csv"),
        "--eval", str(workspace / "val.emb1"),
        "--eval-labels", str(corpus / "val" / "labels.csv"),
        "--mode", "knn", "--k", "3",
        "--out", str(workspace / "knn.json"),
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "accuracy" in out
    doc = json.loads((workspace / "knn.json").read_text())
    assert doc["mode"] == "knn"
    assert 0.0 <= doc["accuracy_percent"] <= 100.0

    rc = main([
        "classify", "--train", str(workspace / "train.emb1"),
        "--train-labels", str(corpus / "train" / "labels.csv"),
        "--eval", str(workspace / "val.emb1"),
        "--eval-labels", str(corpus / "val" / "labels.csv"),
        "--mode", "linear", "--epochs", "40",
    ])
    assert rc == 0


def test_crops_subcommand(workspace):
    out = workspace / "batch.json"
    rc = main(["crops", "--adaption", "B", "--globals", "2", "--locals", "4",
               "--seed", "5", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["adaption"] == "B"
    assert all(c["source"] == "anonymized" for c in doc["globals"])
    assert all(c["source"] == "original" for c in doc["locals"])


def test_run_subcommand(workspace):
    config = workspace / "exp.toml"
    config.write_text(
        "seed = 11\n"
        f'out_dir = "{(workspace / "bundle").as_posix()}"\n'
        "[data]\n"
        f'validation_manifest = "{(workspace / "corpus" / "val" / "manifest.json").as_posix()}"\n'
        f'train_manifest = "{(workspace / "corpus" / "train" / "manifest.json").as_posix()}"\n'
        "[anonymization]\n"
        'methods = ["mask"]\n'
        "degrees = [1.0]\n"
        "[downstream]\n"
        "knn_k = 3\n"
        "epochs = 40\n"
    )
    assert main(["run", "--config", str(config)]) == 0
    assert os.path.isfile(workspace / "bundle" / "run_manifest.json")
    assert os.path.isfile(workspace / "bundle" / "summary_original_queries.csv")


def test_cli_reports_errors_with_nonzero_exit(workspace, capsys):
    rc = main(["embed", "--manifest", str(workspace / "nope.json"),
               "--out", str(workspace / "x.emb1")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
