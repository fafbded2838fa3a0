"""End-to-end experiment orchestration from one TOML config.

A run anonymizes the validation (and optionally training) images over a
method x degree grid, embeds every variant, builds the pseudo ground
truth from the baseline model on original data, executes every retrieval
scenario (each model tag under original and anonymized queries), scores
them, runs downstream classification, and writes a report bundle:

    out_dir/
      run_manifest.json           config echo + seed, for exact re-runs
      anonymized/<split>/<tag>/   anonymized images + manifest
      embeddings/*.emb1           computed (non-imported) matrices
      baseline/rankings.jsonl     pseudo-ground-truth source
      scenarios/<label>/          rankings.jsonl + report.json
      summary_original_queries.csv / summary_anonymized_queries.csv
      downstream.csv              k-NN / linear accuracies per model row
      correlations.csv            Pearson matrix over metric series

Everything is keyed and sorted deterministically: identical config and
seed give a byte-identical bundle (bundle contents never embed the output
location, so the bundle may live anywhere).
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from decimal import ROUND_HALF_UP, Decimal

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ._validation import check_fraction, derive_seed
from .anonymize import METHODS, Anonymizer
from .embedder import GridHistogramEmbedder
from .embfile import EmbeddingMatrix, read_embeddings, write_embeddings
from .errors import AnonbenchError, EmptyGridError, MixedDatasetsError
from .images import load_image, save_image
from .manifest import DatasetManifest, ImageRecord, load_manifest, save_manifest
from .metrics import MetricReport, correlation_matrix, score_scenario
from .probes import CosineKNNClassifier, LabeledEmbeddings, evaluate_accuracy, train_linear_probe
from .retrieval import (
    CosineRetriever,
    ScenarioSpec,
    build_pseudo_ground_truth,
    run_scenario,
    write_rankings,
)


class StageError(AnonbenchError):
    """A pipeline stage failed; the message names the stage."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings for one experiment run.

    Every field has a default except the validation manifest path.
    """

    validation_manifest: str
    train_manifest: str | None = None
    name: str = "experiment"
    seed: int = 0
    out_dir: str = "anonbench-run"
    jobs: int = 1

    methods: tuple[str, ...] = ("pixel", "blur", "mask")
    degrees: tuple[float, ...] = (1.0,)
    pixel_block: int = 8
    blur_sigma_factor: float = 0.25
    mask_fill: tuple[int, int, int] = (0, 0, 0)

    model_tags: tuple[str, ...] = ("unadapted",)
    baseline_tag: str = "unadapted"
    imports: dict = field(default_factory=dict)  # model tag -> {variant: emb1 path}

    grid: int = 8
    bins: int = 8
    include_layout_channel: bool = True

    top_fraction: float = 0.05
    top_k: int | None = None
    gain: str = "linear"
    ap_at: int | None = None

    downstream_enabled: bool = True
    knn_k: int = 20
    learning_rate: float = 1.0
    epochs: int = 300
    l2_penalty: float = 0.0
    train_variant: str = "anonymized"  # which train images feed the probes

    def validate(self) -> None:
        if not self.methods or not self.degrees or not self.model_tags:
            raise EmptyGridError("methods, degrees and model_tags must all be non-empty")
        for method in self.methods:
            if method not in METHODS:
                raise ValueError(f"unknown anonymization method {method!r}")
        for degree in self.degrees:
            check_fraction(degree, "degree")
        if self.baseline_tag not in self.model_tags:
            raise ValueError(f"baseline tag {self.baseline_tag!r} not among model tags")
        if self.train_variant not in ("anonymized", "original"):
            raise ValueError(f"train_variant must be 'anonymized' or 'original', got {self.train_variant!r}")
        tags = [anon_tag(m, d) for m in self.methods for d in self.degrees]
        if len(set(tags)) != len(tags):
            raise ValueError("anonymization grid produces duplicate tags; degrees too close")


def anon_tag(method: str, degree: float) -> str:
    """Canonical variant tag, e.g. mask at degree 0.25 -> 'mask_25'."""
    return f"{method}_{int(round(float(degree) * 100))}"


def split_anon_tag(tag: str) -> tuple[str, float]:
    """Inverse of ``anon_tag``: 'mask_25' -> ('mask', 0.25)."""
    method, _, pct = tag.rpartition("_")
    return method, int(pct) / 100.0


def load_config(path) -> ExperimentConfig:
    """Parse a TOML experiment config; paths resolve against the file."""
    path = os.fspath(path)
    with open(path, "rb") as f:
        doc = tomllib.load(f)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        if p is None:
            return None
        p = os.fspath(p)
        return p if os.path.isabs(p) else os.path.join(base, p)

    data = doc.get("data", {})
    if "validation_manifest" not in data:
        raise ValueError(f"{path}: [data].validation_manifest is required")
    anonymization = doc.get("anonymization", {})
    models = doc.get("models", {})
    embedder = doc.get("embedder", {})
    retrieval = doc.get("retrieval", {})
    downstream = doc.get("downstream", {})
    imports = {
        tag: {variant: resolve(p) for variant, p in variants.items()}
        for tag, variants in doc.get("imports", {}).items()
    }

    cfg = ExperimentConfig(
        validation_manifest=resolve(data["validation_manifest"]),
        train_manifest=resolve(data.get("train_manifest")),
        name=str(doc.get("name", "experiment")),
        seed=int(doc.get("seed", 0)),
        out_dir=resolve(doc.get("out_dir", "anonbench-run")),
        jobs=int(doc.get("jobs", 1)),
        methods=tuple(anonymization.get("methods", ["pixel", "blur", "mask"])),
        degrees=tuple(float(d) for d in anonymization.get("degrees", [1.0])),
        pixel_block=int(anonymization.get("pixel_block", 8)),
        blur_sigma_factor=float(anonymization.get("blur_sigma_factor", 0.25)),
        mask_fill=tuple(int(v) for v in anonymization.get("mask_fill", (0, 0, 0))),
        model_tags=tuple(models.get("tags", ["unadapted"])),
        baseline_tag=str(models.get("baseline", "unadapted")),
        imports=imports,
        grid=int(embedder.get("grid", 8)),
        bins=int(embedder.get("bins", 8)),
        include_layout_channel=bool(embedder.get("include_layout_channel", True)),
        top_fraction=float(retrieval.get("top_fraction", 0.05)),
        top_k=int(retrieval["top_k"]) if "top_k" in retrieval else None,
        gain=str(retrieval.get("gain", "linear")),
        ap_at=int(retrieval["ap_at"]) if "ap_at" in retrieval else None,
        downstream_enabled=bool(downstream.get("enabled", True)),
        knn_k=int(downstream.get("knn_k", 20)),
        learning_rate=float(downstream.get("learning_rate", 1.0)),
        epochs=int(downstream.get("epochs", 300)),
        l2_penalty=float(downstream.get("l2_penalty", 0.0)),
        train_variant=str(downstream.get("train_variant", "anonymized")),
    )
    cfg.validate()
    return cfg


def enumerate_scenarios(cfg: ExperimentConfig) -> list[ScenarioSpec]:
    """All scenario rows: two query blocks x model tags x anonymization grid."""
    cfg.validate()
    specs = []
    for query_source in ("original", "anonymized"):
        for model in cfg.model_tags:
            for method in cfg.methods:
                for degree in cfg.degrees:
                    specs.append(
                        ScenarioSpec(model, query_source, "anonymized", anon_tag(method, degree))
                    )
    return specs


def format_percent(value: float) -> str:
    """One decimal place, rounding halves away from zero."""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@contextmanager
def _stage(name: str):
    try:
        yield
    except Exception as exc:
        raise StageError(f"stage {name!r} failed: {exc}") from exc


def _parallel_map(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


class _EmbeddingProvider:
    """Resolves (model tag, split, variant) to an embedding matrix.

    Toy model tags all share one training-free embedder, so their matrices
    are computed once per image variant; imported tags read EMB1 files
    named by variant ('original', '<anon tag>', 'train__<variant>').
    """

    def __init__(self, cfg: ExperimentConfig, variants):
        self.cfg = cfg
        self.variants = variants  # (split, variant) -> DatasetManifest
        self.embedder = GridHistogramEmbedder(cfg.grid, cfg.bins, cfg.include_layout_channel)
        self._toy_cache: dict = {}
        self._import_cache: dict = {}

    def get(self, model_tag: str, split: str, variant: str) -> EmbeddingMatrix:
        if model_tag in self.cfg.imports:
            key = variant if split == "validation" else f"train__{variant}"
            if (model_tag, key) in self._import_cache:
                return self._import_cache[(model_tag, key)]
            files = self.cfg.imports[model_tag]
            if key not in files:
                raise ValueError(
                    f"imported model {model_tag!r} has no embeddings for {key!r}; "
                    f"available: {sorted(files)}"
                )
            matrix = read_embeddings(files[key])
            expected = self.variants[(split, variant)].ids
            if set(matrix.ids) != set(expected):
                raise ValueError(
                    f"imported embeddings for {model_tag!r}/{key!r} cover different ids "
                    f"than the manifest"
                )
            self._import_cache[(model_tag, key)] = matrix
            return matrix
        cache_key = (split, variant)
        if cache_key not in self._toy_cache:
            self._toy_cache[cache_key] = self.embedder.embed_manifest(
                self.variants[cache_key], jobs=self.cfg.jobs
            )
        return self._toy_cache[cache_key]

    def computed_matrices(self):
        return dict(self._toy_cache)


def _anonymize_split(cfg, manifest, split, tag, out_root):
    method, degree = split_anon_tag(tag)
    anonymizer = Anonymizer(
        method=method,
        degree=degree,
        pixel_block=cfg.pixel_block,
        blur_sigma_factor=cfg.blur_sigma_factor,
        mask_fill=cfg.mask_fill,
    )
    variant_dir = os.path.join(out_root, "anonymized", split, tag)

    def one(record):
        img = load_image(record.path)
        # selection seed depends on the image only, so degree sweeps are
        # nested per image and methods hit the same regions
        out = anonymizer.apply(img, record.boxes, seed=derive_seed(cfg.seed, "anonymize", record.id))
        rel = f"images/{record.id}.png"
        save_image(out, os.path.join(variant_dir, rel))
        return ImageRecord(record.id, rel, record.boxes, record.label)

    records = _parallel_map(one, manifest.records, cfg.jobs)
    variant = DatasetManifest(
        name=manifest.name, split=split, records=tuple(records), dropped_ids=manifest.dropped_ids
    )
    save_manifest(variant, os.path.join(variant_dir, "manifest.json"))
    return load_manifest(os.path.join(variant_dir, "manifest.json"))


def _labels_of(manifest: DatasetManifest) -> dict[str, int]:
    labels = {}
    for record in manifest.records:
        if record.label is None:
            raise ValueError(f"record {record.id!r} has no label; downstream needs labeled data")
        labels[record.id] = record.label
    return labels


def run_experiment(cfg: ExperimentConfig, log=None) -> str:
    """Execute the full pipeline; returns the bundle directory."""
    cfg.validate()
    say = log or (lambda msg: None)
    out_root = os.fspath(cfg.out_dir)
    os.makedirs(out_root, exist_ok=True)
    incomplete_marker = os.path.join(out_root, "INCOMPLETE")
    with open(incomplete_marker, "w", encoding="utf-8") as f:
        f.write("run in progress or aborted\n")

    with _stage("load-data"):
        val_manifest = load_manifest(cfg.validation_manifest, drop_empty=True)
        train_manifest = None
        if cfg.downstream_enabled:
            if cfg.train_manifest is None:
                raise ValueError("downstream evaluation needs [data].train_manifest")
            train_manifest = load_manifest(cfg.train_manifest, drop_empty=True)
    tags = [anon_tag(m, d) for m in cfg.methods for d in cfg.degrees]
    scenarios = enumerate_scenarios(cfg)
    say(f"{cfg.name}: {len(val_manifest)} validation images, "
        f"{len(tags)} anonymization variants, {len(scenarios)} scenarios")

    variants = {("validation", "original"): val_manifest}
    if train_manifest is not None:
        variants[("train", "original")] = train_manifest
    with _stage("anonymize"):
        for tag in tags:
            say(f"anonymizing validation images: {tag}")
            variants[("validation", tag)] = _anonymize_split(cfg, val_manifest, "validation", tag, out_root)
            if train_manifest is not None and cfg.train_variant == "anonymized":
                say(f"anonymizing training images: {tag}")
                variants[("train", tag)] = _anonymize_split(cfg, train_manifest, "train", tag, out_root)

    provider = _EmbeddingProvider(cfg, variants)

    with _stage("baseline"):
        say("building pseudo ground truth from the baseline model")
        baseline = provider.get(cfg.baseline_tag, "validation", "original")
        baseline_rankings = CosineRetriever(exclude_self=True).fit(baseline).rank_matrix(baseline)
        write_rankings(baseline_rankings, os.path.join(out_root, "baseline", "rankings.jsonl"))
        ground_truth = build_pseudo_ground_truth(
            baseline_rankings, top_fraction=cfg.top_fraction, top_k=cfg.top_k
        )
        cutoff_p = next(iter(ground_truth.values())).cutoff_p

    reports: list[MetricReport] = []
    with _stage("scenarios"):
        for spec in scenarios:
            say(f"scenario {spec.label}")
            emb = {
                "original": provider.get(spec.model_tag, "validation", "original"),
                "anonymized": provider.get(spec.model_tag, "validation", spec.anon_tag),
            }
            rankings = run_scenario(spec, emb)
            report = score_scenario(
                rankings, ground_truth, gain=cfg.gain, ap_at=cfg.ap_at,
                scenario=spec, dataset=val_manifest.name,
            )
            scenario_dir = os.path.join(out_root, "scenarios", spec.label)
            write_rankings(rankings, os.path.join(scenario_dir, "rankings.jsonl"))
            with open(os.path.join(scenario_dir, "report.json"), "w", encoding="utf-8", newline="\n") as f:
                json.dump(report.to_dict(), f, indent=2, sort_keys=True)
                f.write("\n")
            reports.append(report)

    downstream: dict[tuple[str, str], dict[str, float]] = {}
    if cfg.downstream_enabled:
        with _stage("downstream"):
            val_labels = _labels_of(val_manifest)
            train_labels = _labels_of(train_manifest)
            n_classes = max(max(val_labels.values()), max(train_labels.values())) + 1
            for model in cfg.model_tags:
                for tag in tags:
                    say(f"downstream {model}/{tag}")
                    train_var = tag if cfg.train_variant == "anonymized" else "original"
                    train_set = LabeledEmbeddings.from_label_map(
                        provider.get(model, "train", train_var), train_labels, n_classes
                    )
                    eval_set = LabeledEmbeddings.from_label_map(
                        provider.get(model, "validation", tag), val_labels, n_classes
                    )
                    knn = CosineKNNClassifier.from_labeled(train_set, k=cfg.knn_k)
                    probe = train_linear_probe(
                        train_set, learning_rate=cfg.learning_rate,
                        epochs=cfg.epochs, l2_penalty=cfg.l2_penalty,
                    )
                    downstream[(model, tag)] = {
                        "knn": evaluate_accuracy(knn, eval_set),
                        "linear": evaluate_accuracy(probe, eval_set),
                    }
            _write_downstream_csv(downstream, cfg, os.path.join(out_root, "downstream.csv"))

    with _stage("summaries"):
        emit_summary_tables(reports, out_root)
        skipped = _write_correlations(reports, downstream, cfg, out_root)
        _write_embeddings_dir(provider, out_root)
        _write_run_manifest(cfg, val_manifest, cutoff_p, scenarios, skipped, out_root)

    os.remove(incomplete_marker)
    say(f"bundle complete: {out_root}")
    return out_root


def _write_embeddings_dir(provider: _EmbeddingProvider, out_root: str) -> None:
    for (split, variant), matrix in sorted(provider.computed_matrices().items()):
        name = f"{'val' if split == 'validation' else 'train'}_{variant}.emb1"
        write_embeddings(matrix, os.path.join(out_root, "embeddings", name))


def _write_downstream_csv(downstream, cfg, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["model", "method", "degree", "knn_accuracy", "linear_accuracy"])
        for model in cfg.model_tags:
            for method in cfg.methods:
                for degree in cfg.degrees:
                    accs = downstream[(model, anon_tag(method, degree))]
                    writer.writerow([
                        model, method, f"{degree:g}",
                        format_percent(accs["knn"]), format_percent(accs["linear"]),
                    ])


def emit_summary_tables(reports, out_dir) -> list[str]:
    """Write one CSV per query block: rows (model, degree), metric columns.

    Column groups mirror the report layout: mAP per method, then mnDCG per
    method, one decimal place with halves rounded away from zero.
    """
    datasets = {r.dataset for r in reports}
    if len(datasets) > 1:
        raise MixedDatasetsError(f"reports mix datasets: {sorted(map(str, datasets))}")
    paths = []
    for block, suffix in (("original", "original_queries"), ("anonymized", "anonymized_queries")):
        block_reports = [r for r in reports if r.scenario is not None
                         and r.scenario.query_source == block]
        if not block_reports:
            continue
        methods, models, degrees = [], [], []
        values = {}
        for report in block_reports:
            method, degree = split_anon_tag(report.scenario.anon_tag)
            model = report.scenario.model_tag
            if method not in methods:
                methods.append(method)
            if model not in models:
                models.append(model)
            if degree not in degrees:
                degrees.append(degree)
            values[(model, degree, method)] = report

        path = os.path.join(os.fspath(out_dir), f"summary_{suffix}.csv")
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(
                ["model", "degree"]
                + [f"map_{m}" for m in methods]
                + [f"mndcg_{m}" for m in methods]
            )
            for model in models:
                for degree in degrees:
                    row_reports = [values.get((model, degree, m)) for m in methods]
                    writer.writerow(
                        [model, f"{degree:g}"]
                        + [format_percent(r.map) if r else "" for r in row_reports]
                        + [format_percent(r.mndcg) if r else "" for r in row_reports]
                    )
        paths.append(path)
    return paths


def _write_correlations(reports, downstream, cfg, out_root) -> list[str]:
    """Correlate metric series over (model, variant) points; returns skips."""
    by_key = {}
    for report in reports:
        spec = report.scenario
        by_key[(spec.model_tag, spec.anon_tag, spec.query_source)] = report
    points = [(model, anon_tag(m, d))
              for model in cfg.model_tags for m in cfg.methods for d in cfg.degrees]

    series = {
        "map_original_queries": [by_key[(mo, t, "original")].map for mo, t in points],
        "mndcg_original_queries": [by_key[(mo, t, "original")].mndcg for mo, t in points],
        "map_anonymized_queries": [by_key[(mo, t, "anonymized")].map for mo, t in points],
        "mndcg_anonymized_queries": [by_key[(mo, t, "anonymized")].mndcg for mo, t in points],
    }
    if downstream:
        series["knn_accuracy"] = [downstream[p]["knn"] for p in points]
        series["linear_accuracy"] = [downstream[p]["linear"] for p in points]

    skipped = [name for name, vals in series.items() if min(vals) == max(vals)]
    usable = {name: vals for name, vals in series.items() if name not in skipped}
    if len(points) < 2 or len(usable) < 2:
        return skipped + [name for name in usable]

    names, matrix = correlation_matrix(usable)
    with open(os.path.join(out_root, "correlations.csv"), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([""] + names)
        for i, name in enumerate(names):
            writer.writerow([name] + [repr(v) for v in matrix[i].tolist()])
    return skipped


def _write_run_manifest(cfg, val_manifest, cutoff_p, scenarios, skipped_series, out_root) -> None:
    echo = {}
    for f in fields(cfg):
        if f.name in ("out_dir", "jobs"):
            continue  # bundle must not embed its own location or parallelism
        value = getattr(cfg, f.name)
        echo[f.name] = list(value) if isinstance(value, tuple) else value
    doc = {
        "bundle_format": 1,
        "config": echo,
        "dataset": val_manifest.name,
        "n_validation_records": len(val_manifest),
        "dropped_validation_ids": list(val_manifest.dropped_ids),
        "cutoff_p": cutoff_p,
        "scenarios": [s.label for s in scenarios],
        "skipped_correlation_series": skipped_series,
    }
    with open(os.path.join(out_root, "run_manifest.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
