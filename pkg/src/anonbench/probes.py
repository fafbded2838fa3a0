"""Downstream classification on frozen embeddings: cosine k-NN and a
linear probe.

Both classifiers are deterministic: the k-NN breaks similarity ties by
ascending row id and vote ties by smallest class id; the probe is a
multinomial logistic regression trained by full-batch gradient descent
from a zero initialization, so repeated fits give identical weights.
"""

from __future__ import annotations

import csv
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_matrix, check_vector
from .embfile import EmbeddingMatrix


@dataclass(frozen=True, eq=False)
class LabeledEmbeddings:
    """An embedding matrix with an aligned integer class label per row."""

    embeddings: EmbeddingMatrix
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != self.embeddings.n:
            raise ValueError(
                f"need one label per row: {labels.shape} labels for {self.embeddings.n} rows"
            )
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes}), got range "
                             f"[{labels.min()}, {labels.max()}]")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_label_map(cls, embeddings: EmbeddingMatrix, label_map: Mapping[str, int],
                       n_classes: int | None = None) -> "LabeledEmbeddings":
        """Align an id -> label mapping to the matrix's row order."""
        missing = [i for i in embeddings.ids if i not in label_map]
        if missing:
            raise ValueError(f"no label for ids: {missing[:5]}")
        labels = np.asarray([int(label_map[i]) for i in embeddings.ids], dtype=np.int64)
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if labels.size else 2
        return cls(embeddings, labels, max(n_classes, 2))


def read_labels_csv(path) -> dict[str, int]:
    """Read an ``id,label`` CSV (with header) into a mapping."""
    out: dict[str, int] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip().lower() for c in header[:2]] != ["id", "label"]:
            raise ValueError(f"{path}: expected header 'id,label', got {header}")
        for row in reader:
            if not row:
                continue
            out[row[0]] = int(row[1])
    return out


def write_labels_csv(label_map: Mapping[str, int], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["id", "label"])
        for key in label_map:
            writer.writerow([key, label_map[key]])


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("cannot take cosine similarity with zero-norm rows")
    return x / norms[:, None]


class CosineKNNClassifier(ClassifierMixin, BaseEstimator):
    """Majority vote over the k most cosine-similar training rows.

    Similarity ties are broken by ascending row id, vote-count ties by
    the smallest class id, so predictions are fully deterministic.
    """

    def __init__(self, k: int = 20):
        self.k = k

    def fit(self, X, y, ids=None):
        x = check_matrix(X)
        labels = np.asarray(y, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != x.shape[0]:
            raise ValueError("y must hold one label per row of X")
        if x.shape[0] == 0:
            raise ValueError("training set is empty")
        if not (1 <= self.k <= x.shape[0]):
            raise ValueError(f"k must be in [1, {x.shape[0]}], got {self.k}")
        if ids is None:
            ids = [str(i) for i in range(x.shape[0])]
        self.train_unit_ = _unit_rows(x)
        self.train_labels_ = labels
        self.train_ids_ = np.asarray([str(i) for i in ids])
        self.n_classes_ = int(labels.max()) + 1
        return self

    @classmethod
    def from_labeled(cls, train: "LabeledEmbeddings", k: int = 20) -> "CosineKNNClassifier":
        clf = cls(k=k)
        clf.fit(train.embeddings.data, train.labels, ids=train.embeddings.ids)
        clf.n_classes_ = train.n_classes
        return clf

    def _neighbor_indices(self, query: np.ndarray) -> np.ndarray:
        sims = self.train_unit_ @ (query / np.linalg.norm(query))
        order = np.lexsort((self.train_ids_, -sims))
        return order[: self.k]

    def predict(self, X) -> np.ndarray:
        x = check_matrix(X)
        if x.shape[1] != self.train_unit_.shape[1]:
            raise ValueError(
                f"query dimension {x.shape[1]} != training dimension {self.train_unit_.shape[1]}"
            )
        preds = np.empty(x.shape[0], dtype=np.int64)
        for i in range(x.shape[0]):
            q = check_vector(x[i], "query")
            if np.linalg.norm(q) == 0.0:
                raise ValueError("query vector has zero norm")
            votes = np.bincount(
                self.train_labels_[self._neighbor_indices(q)], minlength=self.n_classes_
            )
            preds[i] = int(np.argmax(votes))  # argmax -> smallest class on ties
        return preds


def knn_classify(train: LabeledEmbeddings, query_vec, k: int = 20) -> int:
    """Classify one vector against a labeled embedding set."""
    clf = CosineKNNClassifier.from_labeled(train, k=k)
    return int(clf.predict(np.asarray(query_vec, dtype=np.float64)[None, :])[0])


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class LinearProbe(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression on frozen embeddings.

    Full-batch gradient descent from zero weights: convex, seed-free and
    reproducible. ``loss_history_`` records the regularized loss once per
    epoch (including the value before the first step).
    """

    def __init__(self, learning_rate: float = 1.0, epochs: int = 300,
                 l2_penalty: float = 0.0, n_classes: int | None = None):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2_penalty = l2_penalty
        self.n_classes = n_classes

    def fit(self, X, y):
        x = check_matrix(X)
        labels = np.asarray(y, dtype=np.int64)
        if labels.ndim != 1 or labels.shape[0] != x.shape[0]:
            raise ValueError("y must hold one label per row of X")
        if self.learning_rate <= 0 or self.epochs < 0 or self.l2_penalty < 0:
            raise ValueError("learning_rate must be > 0, epochs and l2_penalty >= 0")
        n_classes = self.n_classes or int(labels.max()) + 1
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValueError(f"labels must lie in [0, {n_classes})")
        if len(np.unique(labels)) < 2:
            raise ValueError("training data holds a single class; nothing to separate")

        n = x.shape[0]
        onehot = np.zeros((n, n_classes), dtype=np.float64)
        onehot[np.arange(n), labels] = 1.0

        weights = np.zeros((n_classes, x.shape[1]), dtype=np.float64)
        bias = np.zeros(n_classes, dtype=np.float64)
        history = []
        for _ in range(int(self.epochs)):
            probs = _softmax(x @ weights.T + bias)
            history.append(self._loss(probs, labels, weights))
            residual = probs - onehot
            grad_w = residual.T @ x / n + self.l2_penalty * weights
            grad_b = residual.mean(axis=0)
            weights -= self.learning_rate * grad_w
            bias -= self.learning_rate * grad_b
        probs = _softmax(x @ weights.T + bias)
        history.append(self._loss(probs, labels, weights))

        self.coef_ = weights
        self.intercept_ = bias
        self.n_classes_ = n_classes
        self.loss_history_ = history
        return self

    def _loss(self, probs, labels, weights) -> float:
        nll = -float(np.mean(np.log(np.clip(probs[np.arange(len(labels)), labels], 1e-300, None))))
        return nll + 0.5 * self.l2_penalty * float(np.sum(weights * weights))

    def decision_function(self, X) -> np.ndarray:
        x = check_matrix(X)
        if x.shape[1] != self.coef_.shape[1]:
            raise ValueError(
                f"query dimension {x.shape[1]} != training dimension {self.coef_.shape[1]}"
            )
        return x @ self.coef_.T + self.intercept_

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def train_linear_probe(train: LabeledEmbeddings, learning_rate: float = 1.0,
                       epochs: int = 300, l2_penalty: float = 0.0) -> LinearProbe:
    """Fit a linear probe on a labeled embedding set."""
    probe = LinearProbe(learning_rate=learning_rate, epochs=epochs,
                        l2_penalty=l2_penalty, n_classes=train.n_classes)
    return probe.fit(train.embeddings.data, train.labels)


def evaluate_accuracy(model, eval_set: LabeledEmbeddings) -> float:
    """Percentage of eval rows the model classifies correctly."""
    preds = model.predict(eval_set.embeddings.data.astype(np.float64))
    return float(np.mean(preds == eval_set.labels)) * 100.0
