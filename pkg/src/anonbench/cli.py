"""anonbench command line interface.

Subcommands mirror the pipeline stages so each piece can run standalone:
``demo-data`` makes a synthetic corpus, ``anonymize`` redacts it,
``embed`` produces EMB1 matrices, ``retrieve`` ranks, ``score`` compares
rankings against a baseline, ``classify`` runs downstream probes,
``crops`` inspects the multi-crop sampler, and ``run`` drives a whole
experiment from a TOML config.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from ._validation import derive_seed
from .anonymize import METHODS, Anonymizer
from .crops import ADAPTION_SOURCES, make_adaption_batch
from .embedder import GridHistogramEmbedder
from .embfile import read_embeddings, write_embeddings
from .errors import AnonbenchError
from .experiment import load_config, run_experiment
from .images import load_image, save_image
from .manifest import DatasetManifest, ImageRecord, load_manifest, save_manifest
from .metrics import score_scenario
from .probes import (
    CosineKNNClassifier,
    LabeledEmbeddings,
    evaluate_accuracy,
    read_labels_csv,
    train_linear_probe,
)
from .retrieval import (
    CosineRetriever,
    RankedList,
    build_pseudo_ground_truth,
    read_rankings,
    write_rankings,
)
from .synthetic import make_document_corpus


def _cmd_anonymize(args) -> int:
    manifest = load_manifest(args.manifest, drop_empty=args.drop_empty)
    anonymizer = Anonymizer(
        method=args.method,
        degree=args.degree,
        pixel_block=args.pixel_block,
        blur_sigma_factor=args.blur_sigma_factor,
        mask_fill=tuple(args.mask_fill),
    )
    records = []
    for record in manifest.records:
        img = load_image(record.path)
        out = anonymizer.apply(img, record.boxes, seed=derive_seed(args.seed, "anonymize", record.id))
        rel = f"images/{record.id}.png"
        save_image(out, os.path.join(args.out, rel))
        records.append(ImageRecord(record.id, rel, record.boxes, record.label))
    variant = DatasetManifest(manifest.name, manifest.split, tuple(records), manifest.dropped_ids)
    save_manifest(variant, os.path.join(args.out, "manifest.json"))
    print(f"anonymized {len(records)} images ({args.method}, degree {args.degree:g}) -> {args.out}")
    return 0


def _cmd_crops(args) -> int:
    batch = make_adaption_batch(
        args.image_id, args.adaption, args.globals, args.locals,
        seed=args.seed, image_w=args.width, image_h=args.height,
    )
    text = json.dumps(batch.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_embed(args) -> int:
    manifest = load_manifest(args.manifest, drop_empty=args.drop_empty)
    embedder = GridHistogramEmbedder(
        grid=args.grid, bins=args.bins, include_layout_channel=not args.no_layout_channel
    )
    matrix = embedder.embed_manifest(manifest, jobs=args.jobs)
    write_embeddings(matrix, args.out)
    print(f"embedded {matrix.n} images (dim {matrix.dim}) -> {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    queries = read_embeddings(args.query)
    db = read_embeddings(args.db)
    retriever = CosineRetriever(exclude_self=not args.no_exclude_self).fit(db)
    keep = None
    if args.top_frac < 1.0:
        keep = max(1, int(np.floor(args.top_frac * db.n)))
    rankings = []
    for i, qid in enumerate(queries.ids):
        ranked = retriever.rank(queries.data[i], qid)
        if keep is not None:
            ranked = RankedList(ranked.query_id, ranked.entries[:keep])
        rankings.append(ranked)
    write_rankings(rankings, args.out)
    print(f"ranked {len(rankings)} queries against {db.n} database rows -> {args.out}")
    return 0


def _cmd_score(args) -> int:
    rankings = read_rankings(args.rankings)
    baseline = read_rankings(args.baseline)
    ground_truth = build_pseudo_ground_truth(
        baseline, top_fraction=args.top_frac, top_k=args.top_k
    )
    report = score_scenario(rankings, ground_truth, gain=args.gain, label=args.scenario)
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"{report.label}: mAP={report.map:.2f} mnDCG={report.mndcg:.2f} "
          f"(cutoff {report.cutoff_p}) -> {args.out}")
    return 0


def _cmd_classify(args) -> int:
    train_matrix = read_embeddings(args.train)
    eval_matrix = read_embeddings(args.eval)
    train_set = LabeledEmbeddings.from_label_map(train_matrix, read_labels_csv(args.train_labels))
    eval_set = LabeledEmbeddings.from_label_map(
        eval_matrix, read_labels_csv(args.eval_labels), n_classes=train_set.n_classes
    )
    if args.mode == "knn":
        model = CosineKNNClassifier.from_labeled(train_set, k=args.k)
    else:
        model = train_linear_probe(
            train_set, learning_rate=args.learning_rate,
            epochs=args.epochs, l2_penalty=args.l2_penalty,
        )
    accuracy = evaluate_accuracy(model, eval_set)
    print(f"{args.mode} accuracy: {accuracy:.2f}%")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            json.dump({"mode": args.mode, "accuracy_percent": accuracy}, f, indent=2)
            f.write("\n")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    if args.jobs:
        cfg = dataclasses.replace(cfg, jobs=args.jobs)
    run_experiment(cfg, log=print)
    return 0


def _cmd_demo_data(args) -> int:
    make_document_corpus(
        os.path.join(args.out, "val"), args.val_count, args.seed,
        width=args.width, height=args.height, n_classes=args.classes, split="validation",
    )
    if args.train_count > 0:
        make_document_corpus(
            os.path.join(args.out, "train"), args.train_count, args.seed + 1,
            width=args.width, height=args.height, n_classes=args.classes, split="train",
        )
    print(f"synthetic corpus ({args.val_count} val / {args.train_count} train images) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anonbench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("anonymize", help="apply an anonymization method to a manifest's images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--degree", type=float, required=True, help="fraction of boxes to anonymize")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pixel-block", type=int, default=8)
    p.add_argument("--blur-sigma-factor", type=float, default=0.25)
    p.add_argument("--mask-fill", type=int, nargs=3, default=[0, 0, 0], metavar=("R", "G", "B"))
    p.add_argument("--drop-empty", action="store_true", help="drop records without boxes")
    p.set_defaults(func=_cmd_anonymize)

    p = sub.add_parser("crops", help="emit a (global, local) crop batch description as JSON")
    p.add_argument("--adaption", required=True, choices=sorted(ADAPTION_SOURCES))
    p.add_argument("--globals", type=int, default=2)
    p.add_argument("--locals", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--image-id", default="image")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_crops)

    p = sub.add_parser("embed", help="embed a manifest's images into an EMB1 file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--bins", type=int, default=8)
    p.add_argument("--no-layout-channel", action="store_true")
    p.add_argument("--drop-empty", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("retrieve", help="rank a database for every query embedding")
    p.add_argument("--query", required=True, help="query EMB1 file")
    p.add_argument("--db", required=True, help="database EMB1 file")
    p.add_argument("--top-frac", type=float, default=1.0,
                   help="emit only this top fraction per query (keep 1.0 for scoring)")
    p.add_argument("--no-exclude-self", action="store_true")
    p.add_argument("--out", required=True, help="rankings JSONL output")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("score", help="score rankings against baseline rankings")
    p.add_argument("--rankings", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--out", required=True, help="report JSON output")
    p.add_argument("--top-frac", type=float, default=0.05)
    p.add_argument("--top-k", type=int, default=None, help="absolute cutoff override")
    p.add_argument("--gain", choices=("linear", "exponential"), default="linear")
    p.add_argument("--scenario", default=None, help="label recorded in the report")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("classify", help="k-NN or linear-probe accuracy on embeddings")
    p.add_argument("--train", required=True, help="training EMB1 file")
    p.add_argument("--train-labels", required=True, help="CSV id,label")
    p.add_argument("--eval", required=True, help="evaluation EMB1 file")
    p.add_argument("--eval-labels", required=True, help="CSV id,label")
    p.add_argument("--mode", required=True, choices=("knn", "linear"))
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--learning-rate", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--l2-penalty", type=float, default=0.0)
    p.add_argument("--out", help="optional JSON output")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("run", help="run a full experiment from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the configured output directory")
    p.add_argument("--jobs", type=int, default=None, help="cap stage parallelism")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("demo-data", help="generate a synthetic labeled document corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--val-count", type=int, default=120)
    p.add_argument("--train-count", type=int, default=120)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--classes", type=int, default=4)
    p.set_defaults(func=_cmd_demo_data)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AnonbenchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
