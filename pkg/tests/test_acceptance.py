"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines; a failed assertion surfaces as an ordinary pytest failure.
"""

import json
import math
import os

import numpy as np

import anonbench as ab
from anonbench._validation import derive_seed
from anonbench.cli import main as cli_main
from anonbench.crops import LOCAL_MIN_AREA, make_adaption_batch
from anonbench.embedder import GridHistogramEmbedder
from anonbench.embfile import EmbeddingMatrix
from anonbench.experiment import anon_tag
from anonbench.images import load_image
from anonbench.manifest import BoundingBox
from anonbench.metrics import (
    average_precision,
    correlation_matrix,
    dcg,
    ndcg,
    score_scenario,
)
from anonbench.probes import CosineKNNClassifier, LabeledEmbeddings, train_linear_probe, evaluate_accuracy
from anonbench.retrieval import (
    CosineRetriever,
    PseudoGroundTruth,
    RankedList,
    ScenarioSpec,
    build_pseudo_ground_truth,
    cutoff,
    rank_database,
    run_scenario,
)


def _ok(number, text):
    print(f"[criterion {number:>2}] {text}: PASS")


def test_criterion_01_cutoff_arithmetic():
    assert cutoff(19792) == 989
    assert cutoff(39972) == 1998
    _ok(1, "cutoff(19792)=989 and cutoff(39972)=1998")


def test_criterion_02_baseline_self_consistency(doc_corpus):
    assert len(doc_corpus) == 500
    embedder = GridHistogramEmbedder()
    base = embedder.embed_manifest(doc_corpus)
    rankings = CosineRetriever(exclude_self=True).fit(base).rank_matrix(base)
    ground_truth = build_pseudo_ground_truth(rankings)
    report = score_scenario(rankings, ground_truth, label="baseline-self")
    assert report.map == 100.0
    assert report.mndcg == 100.0
    _ok(2, "baseline scenario scores mAP=100.0 and mnDCG=100.0 exactly on 500 images")


def test_criterion_03_metric_oracle_equivalence():
    def ap_oracle(ids, relevant):
        total, hits, prev_recall = 0.0, 0, 0.0
        for k, doc in enumerate(ids, 1):
            if doc in relevant:
                hits += 1
            recall = hits / len(relevant)
            total += (hits / k) * (recall - prev_recall)
            prev_recall = recall
        return total

    def dcg_oracle(rels):
        return sum(rel / math.log2(i + 2) for i, rel in enumerate(rels))

    rng = np.random.default_rng(101)
    for case in range(1000):
        n = int(rng.integers(1, 201))
        ids = [f"d{i}" for i in range(n)]
        rng.shuffle(ids)
        relevant = set(rng.choice(ids, size=int(rng.integers(1, n + 1)), replace=False).tolist())
        ranking = RankedList("q", tuple((d, 1.0 - i * 1e-4) for i, d in enumerate(ids)))
        assert abs(average_precision(ranking, relevant) - ap_oracle(ids, relevant)) < 1e-12

        relevance = {d: float(rng.uniform(0, 1)) for d in ids}
        p = int(rng.integers(1, n + 1))
        expected_dcg = dcg_oracle([relevance[d] for d in ids[:p]])
        assert abs(dcg(ranking, relevance, p) - expected_dcg) < 1e-12

        baseline_ids = sorted(ids, key=lambda d: (-relevance[d], d))
        ideal = dcg_oracle([relevance[d] for d in baseline_ids[:p]])
        if ideal > 0:
            gt = PseudoGroundTruth("q", tuple(baseline_ids[:p]), relevance, p)
            assert abs(ndcg(ranking, gt) - expected_dcg / ideal) < 1e-12
    _ok(3, "AP and DCG/nDCG match brute-force oracles within 1e-12 on 1000 instances")


def test_criterion_04_retrieval_oracle_equivalence():
    rng = np.random.default_rng(102)
    for case in range(100):
        n = int(rng.integers(2, 501))
        d = int(rng.integers(2, 33))
        data = rng.standard_normal((n, d)).astype(np.float32)
        if n > 4 and case % 2 == 0:
            data[1] = data[0]  # force exact similarity ties
            data[3] = data[2]
        ids = [f"id{i:04d}" for i in range(n)]
        db = EmbeddingMatrix(tuple(ids), data)
        qi = int(rng.integers(0, n))
        ranked = rank_database(ids[qi], data[qi], db, exclude_self=True)

        q = data[qi].astype(np.float64)
        qn = np.linalg.norm(q)
        oracle = []
        for row_id, row in zip(ids, data.astype(np.float64)):
            if row_id == ids[qi]:
                continue
            score = float(np.dot(row, q) / (np.linalg.norm(row) * qn))
            oracle.append((row_id, min(max(score, -1.0), 1.0)))
        oracle.sort(key=lambda e: (-e[1], e[0]))
        assert list(ranked.ids) == [e[0] for e in oracle]
        assert np.allclose([s for _, s in ranked.entries], [s for _, s in oracle], atol=1e-12)
    _ok(4, "rank_database equals the naive full-sort oracle on 100 random matrices")


def test_criterion_05_anonymizer_locality_and_idempotence():
    def disjoint_boxes(rng, w, h):
        # one box per quadrant keeps anchors fixed across repeated passes
        boxes = []
        for qx, qy in ((0, 0), (w // 2, 0), (0, h // 2), (w // 2, h // 2)):
            if rng.random() < 0.3:
                continue
            qw, qh = w // 2, h // 2
            bw = int(rng.integers(2, qw))
            bh = int(rng.integers(2, qh))
            boxes.append(BoundingBox(qx + int(rng.integers(0, qw - bw + 1)),
                                     qy + int(rng.integers(0, qh - bh + 1)), bw, bh))
        return boxes or [BoundingBox(0, 0, 2, 2)]

    rng = np.random.default_rng(103)
    for case in range(500):
        h = int(rng.integers(16, 49))
        w = int(rng.integers(16, 49))
        img = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        boxes = disjoint_boxes(rng, w, h)
        degree = float(rng.uniform(0.2, 1.0))
        seed = int(rng.integers(0, 2**63))
        outside = np.ones((h, w), dtype=bool)
        for box in ab.select_boxes(boxes, degree, seed):
            outside[box.y : box.y + box.h, box.x : box.x + box.w] = False

        for method in ("pixel", "blur", "mask"):
            spec = ab.Anonymizer(method=method, degree=degree, seed=seed, pixel_block=3)
            out = spec.apply(img, boxes)
            assert np.array_equal(out[outside], img[outside]), method
            if method in ("pixel", "mask"):
                assert np.array_equal(spec.apply(out, boxes), out), method

        # locality must also hold for overlapping boxes; mask stays idempotent
        overlapping = boxes + [BoundingBox(max(0, boxes[0].x - 1), boxes[0].y,
                                           boxes[0].w + 1, boxes[0].h)]
        for method in ("pixel", "blur", "mask"):
            spec = ab.Anonymizer(method=method, degree=1.0, seed=seed, pixel_block=3)
            out = spec.apply(img, overlapping)
            covered = np.zeros((h, w), dtype=bool)
            for box in overlapping:
                covered[box.y : box.y + box.h, box.x : box.x + box.w] = True
            assert np.array_equal(out[~covered], img[~covered]), method
            if method == "mask":
                assert np.array_equal(spec.apply(out, overlapping), out)

        # blur of a constant region is the identity
        const = np.full((h, w, 3), int(rng.integers(0, 256)), dtype=np.uint8)
        blurred = ab.blur_region(const, boxes[0], sigma_factor=0.25)
        assert np.array_equal(blurred, const)
    _ok(5, "locality holds for all methods; mask/pixel idempotent; blur(const)=const (500 cases)")


def test_criterion_06_monotone_subset():
    rng = np.random.default_rng(104)
    for case in range(1000):
        n = int(rng.integers(0, 20))
        boxes = [BoundingBox(i, 0, 1, 1) for i in range(n)]
        seed = int(rng.integers(0, 2**63))
        low, high = sorted(rng.uniform(0, 1, size=2))
        small = {b.x for b in ab.select_boxes(boxes, low, seed)}
        large = {b.x for b in ab.select_boxes(boxes, high, seed)}
        assert small <= large
    _ok(6, "selection at degree p is a subset of degree q >= p (1000 cases)")


def test_criterion_07_degradation_trend(doc_corpus):
    embedder = GridHistogramEmbedder()
    base = embedder.embed_manifest(doc_corpus)
    baseline_rankings = CosineRetriever(exclude_self=True).fit(base).rank_matrix(base)
    ground_truth = build_pseudo_ground_truth(baseline_rankings)

    degrees = (0.25, 0.5, 0.75, 1.0)
    maps = {}
    for degree in degrees:
        spec = ab.Anonymizer(method="mask", degree=degree)
        rows = []
        for record in doc_corpus.records:
            img = load_image(record.path)
            out = spec.apply(img, record.boxes, seed=derive_seed(77, "anonymize", record.id))
            rows.append(embedder.embed_image(out))
        matrix = EmbeddingMatrix(doc_corpus.ids, np.stack(rows))
        scenario = ScenarioSpec("unadapted", "original", "anonymized", anon_tag("mask", degree))
        rankings = run_scenario(scenario, {"original": base, "anonymized": matrix})
        maps[degree] = score_scenario(rankings, ground_truth, scenario=scenario).map

    assert maps[1.0] < maps[0.25], maps
    for lo, hi in zip(degrees, degrees[1:]):
        assert maps[hi] <= maps[lo] + 2.0, maps
    _ok(7, f"masking degrades mAP monotonically across degrees: "
           f"{[round(maps[d], 2) for d in degrees]}")


def test_criterion_08_crop_adaption_contract():
    expected = {"A": ("original", "anonymized"),
                "B": ("anonymized", "original"),
                "C": ("anonymized", "anonymized")}
    rng = np.random.default_rng(105)
    violations = 0
    for case in range(10000):
        adaption = ("A", "B", "C")[case % 3]
        w = int(rng.integers(96, 301))
        h = int(rng.integers(96, 301))
        batch = make_adaption_batch(f"img{case}", adaption, 2, 2,
                                    seed=int(rng.integers(0, 2**63)), image_w=w, image_h=h)
        global_src, local_src = expected[adaption]
        for crop in batch.globals:
            if crop.source != global_src or not (0.5 < crop.area_fraction <= 1.0):
                violations += 1
            region = crop.region
            if region.x < 0 or region.y < 0 or region.x + region.w > w or region.y + region.h > h:
                violations += 1
        for crop in batch.locals:
            if crop.source != local_src or not (LOCAL_MIN_AREA <= crop.area_fraction < 0.5):
                violations += 1
            region = crop.region
            if region.x < 0 or region.y < 0 or region.x + region.w > w or region.y + region.h > h:
                violations += 1
    assert violations == 0
    _ok(8, "source tags and area constraints hold over 10000 batches, zero violations")


def test_criterion_09_pcc_sanity():
    assert abs(ab.pearson_correlation([1, 2, 3], [1, 3, 2]) - 0.5) < 1e-12
    assert abs(ab.pearson_correlation([1, 2, 3], [2, 4, 6]) - 1.0) < 1e-12
    assert abs(ab.pearson_correlation([1, 2, 3], [-1, -2, -3]) + 1.0) < 1e-12

    series = {"a": [1.0, 2.0, 3.0], "b": [1.0, 3.0, 2.0], "c": [2.0, 4.0, 6.0]}
    names, matrix = correlation_matrix(series)
    assert np.allclose(matrix, matrix.T, atol=0)
    assert np.allclose(np.diag(matrix), 1.0, atol=1e-12)
    assert abs(matrix[names.index("a"), names.index("b")] - 0.5) < 1e-12
    assert abs(matrix[names.index("a"), names.index("c")] - 1.0) < 1e-12
    _ok(9, "correlation matrix reproduces hand-computed coefficients")


def test_criterion_10_downstream_sanity():
    rng = np.random.default_rng(106)
    gap = np.zeros(8)
    gap[0] = 5.0
    x = np.vstack([
        rng.normal(0, 0.25, size=(100, 8)) - gap,
        rng.normal(0, 0.25, size=(100, 8)) + gap,
    ]).astype(np.float32)
    y = np.array([0] * 100 + [1] * 100)
    ids = tuple(f"b{i:03d}" for i in range(200))
    train = LabeledEmbeddings(EmbeddingMatrix(ids, x), y, 2)

    probe = train_linear_probe(train, learning_rate=1.0, epochs=250)
    assert evaluate_accuracy(probe, train) == 100.0

    knn = CosineKNNClassifier.from_labeled(train, k=1)
    assert evaluate_accuracy(knn, train) == 100.0
    _ok(10, "linear probe and 1-NN both reach 100% on separable blobs")


def test_criterion_11_end_to_end_determinism(small_corpus, tmp_path):
    config_path = tmp_path / "exp.toml"
    config_path.write_text(
        'name = "determinism"\n'
        "seed = 99\n"
        "[data]\n"
        f'validation_manifest = "{(small_corpus["root"] / "val" / "manifest.json").as_posix()}"\n'
        f'train_manifest = "{(small_corpus["root"] / "train" / "manifest.json").as_posix()}"\n'
        "[anonymization]\n"
        'methods = ["mask"]\n'
        "degrees = [0.25, 1.0]\n"
        "[downstream]\n"
        "knn_k = 5\n"
        "epochs = 60\n"
    )
    out_a = tmp_path / "bundle_a"
    out_b = tmp_path / "bundle_b"
    assert cli_main(["run", "--config", str(config_path), "--out", str(out_a)]) == 0
    assert cli_main(["run", "--config", str(config_path), "--out", str(out_b), "--jobs", "2"]) == 0

    def snapshot(root):
        files = {}
        for dirpath, _, names in os.walk(root):
            for name in names:
                path = os.path.join(dirpath, name)
                with open(path, "rb") as f:
                    files[os.path.relpath(path, root)] = f.read()
        return files

    a, b = snapshot(out_a), snapshot(out_b)
    assert set(a) == set(b)
    differing = [k for k in a if a[k] != b[k]]
    assert differing == []
    with open(out_a / "run_manifest.json") as f:
        assert json.load(f)["config"]["seed"] == 99
    _ok(11, f"two runs produced byte-identical bundles ({len(a)} files)")
