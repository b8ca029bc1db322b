"""Scoring primitives and pairwise-similarity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric is undefined for this input (single class, zero variance)."""


def auroc(scores, labels) -> float:
    """Area under the ROC curve, rank-based with average ranks on ties.

    Equals (sum of positive ranks - P(P+1)/2) / (P*N); requires both classes.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("auroc: scores and labels must be 1-D and the same length")
    positive = labels != 0
    num_pos = int(positive.sum())
    num_neg = int(labels.size - num_pos)
    if num_pos == 0 or num_neg == 0:
        raise UndefinedMetricError("auroc is undefined when only one class is present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum = float(ranks[positive].sum())
    return (rank_sum - num_pos * (num_pos + 1) / 2.0) / (num_pos * num_neg)


def pearson(x, y) -> float:
    """Sample Pearson correlation; requires length >= 2 and nonzero variances."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson: inputs must be 1-D and the same length")
    if x.size < 2:
        raise UndefinedMetricError("pearson requires at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt((dx * dx).sum()))
    sy = float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedMetricError("pearson is undefined for zero-variance input")
    return float((dx * dy).sum()) / (sx * sy)


@dataclass(frozen=True)
class SimilarityMatrix:
    """Pairwise cosine similarities; zero rows yield 0 entries by convention."""

    entries: np.ndarray
    row_labels: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])


def cosine_matrix(rows, row_labels: tuple[str, ...] | None = None) -> SimilarityMatrix:
    """Cosine similarity between all pairs of rows."""
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.sqrt((rows * rows).sum(axis=1))
    safe = np.where(norms > 0, norms, 1.0)
    unit = rows / safe[:, None]
    entries = unit @ unit.T
    zero = norms == 0
    entries[zero, :] = 0.0
    entries[:, zero] = 0.0
    if row_labels is None:
        row_labels = tuple(str(i) for i in range(rows.shape[0]))
    return SimilarityMatrix(entries=entries, row_labels=row_labels)


def off_diag_mean_abs(sim: SimilarityMatrix) -> float:
    """Mean absolute off-diagonal similarity; the overlap diagnostic."""
    k = sim.size
    if k < 2:
        raise ValueError("off_diag_mean_abs requires at least a 2x2 matrix")
    mask = ~np.eye(k, dtype=bool)
    return float(np.abs(sim.entries[mask]).mean())
