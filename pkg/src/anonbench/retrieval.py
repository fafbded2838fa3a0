"""Exact cosine-similarity ranking, pseudo ground truth, retrieval scenarios.

Rankings are exhaustive (every database id appears once) and fully
deterministic: similarity is accumulated in float64 regardless of storage
precision and ties are broken by ascending id. The pseudo ground truth for
a query is the top fraction (default 5%) of a baseline ranking, with the
baseline's cosine scores kept as graded relevance for every database id.
"""

from __future__ import annotations

import json
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_vector
from .embfile import EmbeddingMatrix
from .errors import (
    DatabaseTooSmallError,
    IdSetMismatchError,
    InconsistentCoverageError,
)

SOURCES = ("original", "anonymized")


@dataclass(frozen=True)
class RankedList:
    """A query's database ids ordered by descending cosine similarity."""

    query_id: str
    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        ids = [e[0] for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"ranking for {self.query_id!r} repeats a database id")
        scores = np.fromiter((e[1] for e in self.entries), dtype=np.float64, count=len(self.entries))
        if scores.size and np.any(np.diff(scores) > 0):
            raise ValueError(f"ranking for {self.query_id!r} has increasing scores")
        for k in range(1, len(self.entries)):
            if scores[k] == scores[k - 1] and ids[k] <= ids[k - 1]:
                raise ValueError(f"ranking for {self.query_id!r} breaks ties out of id order")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(e[0] for e in self.entries)


@dataclass(frozen=True)
class PseudoGroundTruth:
    """Baseline top-p ids (in rank order) plus baseline scores for all ids."""

    query_id: str
    top_ids: tuple[str, ...]
    relevance: Mapping[str, float]
    cutoff_p: int

    @property
    def relevant_ids(self) -> frozenset:
        return frozenset(self.top_ids)


@dataclass(frozen=True)
class ScenarioSpec:
    """One retrieval scenario: which embeddings query which database."""

    model_tag: str
    query_source: str  # "original" | "anonymized"
    db_source: str
    anon_tag: str

    def __post_init__(self):
        if self.query_source not in SOURCES or self.db_source not in SOURCES:
            raise ValueError(f"sources must be one of {SOURCES}")

    @property
    def label(self) -> str:
        block = "origq" if self.query_source == "original" else "anonq"
        return f"{self.model_tag}__{self.anon_tag}__{block}"


def cosine_similarity(a, b) -> float:
    """Cosine of two non-zero vectors, accumulated in float64, in [-1, 1]."""
    va = check_vector(a, "a")
    vb = check_vector(b, "b", dim=va.shape[0])
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero vectors")
    return float(min(max(va @ vb / (na * nb), -1.0), 1.0))


class CosineRetriever(BaseEstimator):
    """Exact exhaustive retrieval over a fitted embedding database.

    ``fit`` caches float64 data and row norms; ``rank`` then scores one
    query against every database row. When ``exclude_self`` is on, a query
    never retrieves its own database counterpart (matched by id).
    """

    def __init__(self, exclude_self: bool = True):
        self.exclude_self = exclude_self

    def fit(self, db: EmbeddingMatrix, y=None):
        data = db.data.astype(np.float64)
        norms = np.linalg.norm(data, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ValueError(f"database row {db.ids[zero[0]]!r} has zero norm")
        self.db_ = db
        self.data64_ = data
        self.norms_ = norms
        self.id_array_ = np.asarray(db.ids)
        return self

    def rank(self, query_vec, query_id: str = "query") -> RankedList:
        """Rank every database id for one query vector."""
        q = check_vector(query_vec, "query_vec", dim=self.data64_.shape[1])
        qn = np.linalg.norm(q)
        if qn == 0.0:
            raise ValueError("query vector has zero norm")
        sims = self.data64_ @ q / (self.norms_ * qn)
        np.clip(sims, -1.0, 1.0, out=sims)

        ids = self.id_array_
        if self.exclude_self:
            keep = ids != query_id
            if not np.any(keep):
                raise ValueError("database is empty after excluding the query itself")
            sims = sims[keep]
            ids = ids[keep]
        order = np.lexsort((ids, -sims))
        entries = tuple((str(ids[i]), float(sims[i])) for i in order)
        return RankedList(query_id, entries)

    def rank_matrix(self, queries: EmbeddingMatrix) -> list[RankedList]:
        """Rank each query row in matrix order. Queries are independent."""
        return [self.rank(queries.data[i], qid) for i, qid in enumerate(queries.ids)]


def rank_database(
    query_id: str, query_vec, db: EmbeddingMatrix, exclude_self: bool = True
) -> RankedList:
    """One-shot ranking of a single query against a database matrix."""
    return CosineRetriever(exclude_self=exclude_self).fit(db).rank(query_vec, query_id)


def cutoff(n_db: int, top_fraction: float = 0.05) -> int:
    """Relevance cutoff p = floor(top_fraction * n_db); must be >= 1."""
    if not (0.0 < top_fraction <= 1.0):
        raise ValueError(f"top_fraction must be in (0, 1], got {top_fraction}")
    p = int(np.floor(top_fraction * n_db))
    if p < 1:
        raise DatabaseTooSmallError(
            f"database of {n_db} entries yields cutoff 0 at fraction {top_fraction} "
            f"(need at least {int(np.ceil(1.0 / top_fraction))})"
        )
    return p


def build_pseudo_ground_truth(
    baseline_rankings: Sequence[RankedList],
    top_fraction: float = 0.05,
    top_k: int | None = None,
) -> dict[str, PseudoGroundTruth]:
    """Turn full baseline rankings into per-query pseudo ground truth.

    The relevant set of a query is the first p entries of its baseline
    ranking, where p = floor(top_fraction * ranking length) unless a fixed
    ``top_k`` is given. The returned relevance map keeps the baseline score
    of *every* database id, as graded gains need scores beyond the cutoff.
    """
    if not baseline_rankings:
        raise ValueError("no baseline rankings given")

    # Consistent coverage: either every ranking lists the same ids (external
    # queries) or the id sets agree once each query's excluded self is added
    # back (queries drawn from the database itself).
    n = len(baseline_rankings[0])
    plain = frozenset(baseline_rankings[0].ids)
    with_self = plain | {baseline_rankings[0].query_id}
    plain_ok = self_ok = True
    for ranked in baseline_rankings:
        if len(ranked) != n:
            plain_ok = self_ok = False
        cover = frozenset(ranked.ids)
        plain_ok = plain_ok and cover == plain
        self_ok = self_ok and (cover | {ranked.query_id}) == with_self
        if not (plain_ok or self_ok):
            raise InconsistentCoverageError(
                f"ranking for {ranked.query_id!r} covers a different database"
            )

    if top_k is not None:
        if not (1 <= top_k <= n):
            raise ValueError(f"top_k must be in [1, {n}], got {top_k}")
        p = int(top_k)
    else:
        p = cutoff(n, top_fraction)

    out = {}
    for ranked in baseline_rankings:
        out[ranked.query_id] = PseudoGroundTruth(
            query_id=ranked.query_id,
            top_ids=tuple(i for i, _ in ranked.entries[:p]),
            relevance={i: s for i, s in ranked.entries},
            cutoff_p=p,
        )
    return out


def run_scenario(
    spec: ScenarioSpec, embeddings: Mapping[str, EmbeddingMatrix]
) -> list[RankedList]:
    """Execute one scenario: rank the query matrix against the db matrix.

    Both matrices must describe the same image set (identical ids); the
    query never retrieves its own database counterpart.
    """
    for source in (spec.query_source, spec.db_source):
        if source not in embeddings:
            raise KeyError(f"scenario needs embeddings for source {source!r}")
    queries = embeddings[spec.query_source]
    db = embeddings[spec.db_source]
    if set(queries.ids) != set(db.ids):
        raise IdSetMismatchError(
            f"query and database id sets differ for scenario {spec.label}"
        )
    return CosineRetriever(exclude_self=True).fit(db).rank_matrix(queries)


def write_rankings(rankings: Sequence[RankedList], path) -> None:
    """Write rankings as JSON lines: {"query_id", "entries": [[id, score]...]}."""
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ranked in rankings:
            doc = {"query_id": ranked.query_id, "entries": [[i, s] for i, s in ranked.entries]}
            f.write(json.dumps(doc))
            f.write("\n")


def read_rankings(path) -> list[RankedList]:
    """Read and re-validate a rankings JSONL file."""
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            doc = json.loads(line)
            entries = tuple((str(i), float(s)) for i, s in doc["entries"])
            out.append(RankedList(str(doc["query_id"]), entries))
    return out
