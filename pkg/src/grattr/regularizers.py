"""Two training-time constraints on a graph network.

Orthonormal-embedding penalty: per graph, (lam/2) * ||H H^T - I||_F on the
final-conv node embeddings, averaged over the batch. Pushing H toward
orthonormal rows decorrelates node representations.

Output-row sparsity: divide the task loss by g^m, where g is the mean Gini
coefficient of the absolute values of the output-weight rows. High g means
each task leans on few embedding dimensions, which sharpens dot-product
attribution maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .model import ForwardArtifacts

MODES = ("none", "bro", "gini", "both")

# An all-zero weight row has an undefined Gini coefficient; rows whose mean
# magnitude falls below this are scored 0 and contribute no gradient.
ZERO_ROW_FLOOR = 1e-12


@dataclass(frozen=True)
class RegularizerConfig:
    mode: str = "none"
    lam: float = 1e-3     # orthonormality strength
    m: float = 5.0        # sparsity exponent
    g_floor: float = 1e-3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown regularizer mode {self.mode!r}")
        if self.lam < 0 or self.m < 0:
            raise ValueError("lam and m must be non-negative")


def _mean_tensors(terms: Sequence[ad.Tensor]) -> ad.Tensor:
    total = reduce(ad.add, terms)
    return ad.scalar_multiply(total, 1.0 / len(terms))


def bro_loss(final_embeddings: ad.Tensor, node_offsets: Sequence[int], lam: float) -> ad.Tensor:
    """Mean over graphs of (lam/2) * ||H_g H_g^T - I||_F, differentiable.

    final_embeddings stacks every graph's final-conv rows; node_offsets
    delimits the per-graph blocks (len(node_offsets) = num_graphs + 1).
    """
    tape = final_embeddings.tape
    total_rows = final_embeddings.shape[0]
    terms = []
    for g in range(len(node_offsets) - 1):
        start, end = node_offsets[g], node_offsets[g + 1]
        n_g = end - start
        selector = np.zeros((n_g, total_rows))
        selector[np.arange(n_g), np.arange(start, end)] = 1.0
        block = ad.matmul(tape.constant(selector), final_embeddings)
        gram = ad.matmul(block, ad.transpose(block))
        deviation = ad.subtract(gram, tape.constant(np.eye(n_g)))
        terms.append(ad.scalar_multiply(ad.frobenius_norm(deviation), lam / 2.0))
    return _mean_tensors(terms)


def bro_value(final_embeddings: np.ndarray, node_offsets: Sequence[int], lam: float) -> float:
    """Plain-array twin of bro_loss for cheap monitoring."""
    total = 0.0
    count = len(node_offsets) - 1
    for g in range(count):
        block = final_embeddings[node_offsets[g]:node_offsets[g + 1]]
        deviation = block @ block.T - np.eye(block.shape[0])
        total += (lam / 2.0) * float(np.sqrt((deviation * deviation).sum()))
    return total / count


def gini_row(w_row: ad.Tensor) -> ad.Tensor:
    """Gini coefficient of one weight row, on its absolute values.

    With v = |w| and mean v_bar, returns sum_{j,j'} |v_j - v_j'| over
    2 (n^2 - n) v_bar. Zero when all entries are equal, one when exactly one
    entry is non-zero; an all-zero row scores 0 by convention.
    """
    if w_row.shape[0] != 1:
        raise ad.DimensionError(f"gini_row: expected a row vector, got {w_row.shape}")
    n = w_row.shape[1]
    if n < 2:
        raise ValueError("gini_row requires a row of length >= 2")
    tape = w_row.tape
    v = ad.absolute(w_row)
    if float(np.abs(w_row.data).mean()) < ZERO_ROW_FLOOR:
        return tape.constant(0.0)
    column = ad.transpose(v)
    left = ad.matmul(column, tape.constant(np.ones((1, n))))
    right = ad.matmul(tape.constant(np.ones((n, 1))), v)
    pairwise = ad.sum_all(ad.absolute(ad.subtract(left, right)))
    # 2 (n^2 - n) v_bar regrouped as 2 (n - 1) sum(v): exact for one-hot rows
    denominator = ad.scalar_multiply(ad.sum_all(v), 2.0 * (n - 1))
    return ad.scalar_divide(pairwise, denominator)


def gini_mean(output_weights: ad.Tensor) -> ad.Tensor:
    """Mean of gini_row over the rows of the output weight matrix."""
    num_tasks = output_weights.shape[0]
    if num_tasks < 1:
        raise ValueError("gini_mean requires at least one row")
    tape = output_weights.tape
    rows = []
    for i in range(num_tasks):
        selector = np.zeros((1, num_tasks))
        selector[0, i] = 1.0
        rows.append(gini_row(ad.matmul(tape.constant(selector), output_weights)))
    return _mean_tensors(rows)


def gini_value(output_weights: np.ndarray) -> float:
    """Plain-array twin of gini_mean for cheap monitoring."""
    tape = ad.Tape()
    return gini_mean(tape.constant(output_weights)).value


def total_loss(task_loss: ad.Tensor, artifacts: ForwardArtifacts,
               cfg: RegularizerConfig) -> ad.Tensor:
    """Compose the task loss with the active constraints.

    none -> task_loss; bro -> task_loss + bro term; gini -> task_loss divided
    by max(g, g_floor)^m with gradients flowing through g; both -> divide the
    task loss by g^m, then add the bro term.
    """
    loss = task_loss
    if cfg.mode in ("gini", "both"):
        g = gini_mean(artifacts.param_tensors["output_weights"])
        if g.value < cfg.g_floor:
            g = task_loss.tape.constant(cfg.g_floor)
        loss = ad.scalar_divide(loss, ad.scalar_power(g, cfg.m))
    if cfg.mode in ("bro", "both"):
        loss = ad.add(loss, bro_loss(artifacts.final_embeddings,
                                     artifacts.node_offsets, cfg.lam))
    return loss
