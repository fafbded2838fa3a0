"""Ranking-quality metrics and correlation utilities.

Average precision treats the pseudo-ground-truth set as binary relevance
and sums precision over the full ranking. Discounted cumulative gain uses
the baseline model's cosine scores as graded relevance with a *linear*
gain for both DCG and its ideal normalizer, so a ranking identical to the
baseline scores exactly 1. An exponential gain (2^rel - 1) is available
behind the ``gain`` switch for comparison, applied to both sides.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateIdealError, ZeroVarianceError
from .retrieval import PseudoGroundTruth, RankedList, ScenarioSpec

GAINS = ("linear", "exponential")


def _ranked_ids(ranked) -> Sequence[str]:
    if isinstance(ranked, RankedList):
        return [e[0] for e in ranked.entries]
    return list(ranked)


def average_precision(ranked, relevant, at: int | None = None) -> float:
    """AP of a ranking against a binary relevant set.

    Sums precision at every rank holding a relevant id (each contributing
    recall mass 1/|relevant|) over the full ranking, or over the first
    ``at`` ranks when given. ``ranked`` may be a RankedList or any id
    sequence.
    """
    ids = _ranked_ids(ranked)
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevant set must not be empty")
    missing = relevant - set(ids)
    if missing:
        raise ValueError(f"relevant ids missing from the ranking: {sorted(missing)[:5]}")
    if at is not None:
        ids = ids[:at]
    hits = 0
    acc = 0.0
    for k, doc_id in enumerate(ids, start=1):
        if doc_id in relevant:
            hits += 1
            acc += hits / k
    return acc / len(relevant)


def mean_average_precision(scores: Sequence[float]) -> float:
    """Arithmetic mean of per-query AP values, as a percentage."""
    if len(scores) == 0:
        raise ValueError("cannot average an empty score sequence")
    return float(np.mean(np.asarray(scores, dtype=np.float64))) * 100.0


def _discounted_sum(relevances: Sequence[float], gain: str) -> float:
    if gain not in GAINS:
        raise ValueError(f"gain must be one of {GAINS}, got {gain!r}")
    total = 0.0
    for i, rel in enumerate(relevances, start=1):
        g = rel if gain == "linear" else (2.0**rel - 1.0)
        total += g / math.log2(i + 1)
    return total


def dcg(ranked, relevance: Mapping[str, float], p: int, gain: str = "linear") -> float:
    """Discounted cumulative gain of the top-p ranked ids.

    Relevance of the id at rank i is looked up in ``relevance`` (a KeyError
    signals an id without a score).
    """
    ids = _ranked_ids(ranked)
    if not (1 <= p <= len(ids)):
        raise ValueError(f"p must be in [1, {len(ids)}], got {p}")
    return _discounted_sum([relevance[doc_id] for doc_id in ids[:p]], gain)


def idcg(baseline_ranked: RankedList, p: int, gain: str = "linear") -> float:
    """DCG of the baseline's own top-p, the ideal ordering by construction."""
    if not (1 <= p <= len(baseline_ranked)):
        raise ValueError(f"p must be in [1, {len(baseline_ranked)}], got {p}")
    value = _discounted_sum([s for _, s in baseline_ranked.entries[:p]], gain)
    if value <= 0.0:
        raise DegenerateIdealError(f"ideal DCG is {value}; nDCG undefined")
    return value


def ndcg(ranked, ground_truth: PseudoGroundTruth, gain: str = "linear") -> float:
    """Normalized DCG of a ranking against a query's pseudo ground truth."""
    p = ground_truth.cutoff_p
    ideal = _discounted_sum(
        [ground_truth.relevance[doc_id] for doc_id in ground_truth.top_ids], gain
    )
    if ideal <= 0.0:
        raise DegenerateIdealError(f"ideal DCG is {ideal}; nDCG undefined")
    return dcg(ranked, ground_truth.relevance, p, gain) / ideal


def mndcg(per_query_ndcg: Sequence[float]) -> float:
    """Arithmetic mean of per-query nDCG values, as a percentage."""
    if len(per_query_ndcg) == 0:
        raise ValueError("cannot average an empty score sequence")
    return float(np.mean(np.asarray(per_query_ndcg, dtype=np.float64))) * 100.0


@dataclass(frozen=True)
class QueryScore:
    query_id: str
    ap: float
    ndcg: float


@dataclass(frozen=True)
class MetricReport:
    """Per-scenario aggregate metrics plus the per-query breakdown."""

    label: str
    map: float
    mndcg: float
    cutoff_p: int
    per_query: tuple[QueryScore, ...]
    scenario: ScenarioSpec | None = None
    dataset: str | None = None

    def to_dict(self) -> dict:
        scenario = None
        if self.scenario is not None:
            scenario = {
                "model_tag": self.scenario.model_tag,
                "query_source": self.scenario.query_source,
                "db_source": self.scenario.db_source,
                "anon_tag": self.scenario.anon_tag,
            }
        return {
            "scenario": {"label": self.label, **(scenario or {})},
            "dataset": self.dataset,
            "cutoff_p": self.cutoff_p,
            "map": self.map,
            "mndcg": self.mndcg,
            "per_query": [
                {"query_id": q.query_id, "ap": q.ap, "ndcg": q.ndcg} for q in self.per_query
            ],
        }


def score_scenario(
    rankings: Sequence[RankedList],
    ground_truth: Mapping[str, PseudoGroundTruth],
    gain: str = "linear",
    ap_at: int | None = None,
    scenario: ScenarioSpec | None = None,
    label: str | None = None,
    dataset: str | None = None,
) -> MetricReport:
    """Score a scenario's rankings against the pseudo ground truth."""
    if not rankings:
        raise ValueError("no rankings to score")
    per_query = []
    cutoffs = set()
    for ranked in rankings:
        if ranked.query_id not in ground_truth:
            raise KeyError(f"no pseudo ground truth for query {ranked.query_id!r}")
        gt = ground_truth[ranked.query_id]
        cutoffs.add(gt.cutoff_p)
        per_query.append(
            QueryScore(
                query_id=ranked.query_id,
                ap=average_precision(ranked, gt.relevant_ids, at=ap_at),
                ndcg=ndcg(ranked, gt, gain=gain),
            )
        )
    if len(cutoffs) != 1:
        raise ValueError(f"inconsistent cutoffs across queries: {sorted(cutoffs)}")
    if label is None:
        label = scenario.label if scenario is not None else "scenario"
    return MetricReport(
        label=label,
        map=mean_average_precision([q.ap for q in per_query]),
        mndcg=mndcg([q.ndcg for q in per_query]),
        cutoff_p=cutoffs.pop(),
        per_query=tuple(per_query),
        scenario=scenario,
        dataset=dataset,
    )


def pearson_correlation(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient, accumulated in float64."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"series must be 1-D and equal length, got {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two points to correlate")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVarianceError("correlation is undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(max(r, -1.0), 1.0)


def correlation_matrix(series: Mapping[str, Sequence[float]]) -> tuple[list[str], np.ndarray]:
    """Pairwise Pearson matrix over named series, in insertion order."""
    names = list(series)
    if len(names) < 1:
        raise ValueError("no series given")
    lengths = {name: len(series[name]) for name in names}
    if len(set(lengths.values())) != 1:
        raise ValueError(f"series lengths differ: {lengths}")
    matrix = np.empty((len(names), len(names)), dtype=np.float64)
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            matrix[i, j] = pearson_correlation(series[a], series[b])
    return names, matrix
