"""Scikit-learn style estimator wrapping the graph network and its trainers.

GraphConvNetwork follows the fit/predict/get_params contract so it composes
with sklearn tooling (clone, pipelines, grid search). X is a sequence of
Graph objects or SMILES strings; y is a (n,) or (n, num_tasks) array where
NaN marks unobserved entries.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .attribution import AttributionMap, attribute
from .data import Dataset, targets_matrix
from .graphs import Graph, make_batch
from .metrics import auroc, pearson
from .model import ModelConfig, predict as model_predict
from .regularizers import RegularizerConfig
from .smiles import ALPHABET_SIZE as SMILES_ALPHABET_SIZE, parse_smiles
from .training import TrainConfig, train


def as_graphs(X) -> tuple[Graph, ...]:
    """Validate input graphs; SMILES strings are parsed on the fly."""
    graphs = []
    for idx, item in enumerate(X):
        if isinstance(item, Graph):
            graphs.append(item)
        elif isinstance(item, str):
            graphs.append(parse_smiles(item))
        else:
            raise TypeError(f"X[{idx}] is {type(item).__name__}, expected Graph or SMILES string")
    if not graphs:
        raise ValueError("X must contain at least one graph")
    return tuple(graphs)


def targets_from_y(y, num_graphs: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalize y to (n, T) target and mask arrays; NaN entries are masked out."""
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] != num_graphs:
        raise ValueError(f"y has shape {np.shape(y)}, expected ({num_graphs},) or "
                         f"({num_graphs}, num_tasks)")
    mask = np.isfinite(arr)
    return np.where(mask, arr, 0.0), mask


def check_is_fitted(estimator) -> None:
    if getattr(estimator, "params_", None) is None:
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call fit first."
        )


class GraphConvNetwork(BaseEstimator):
    """Multi-task graph convolutional network with optional training constraints.

    Parameters mirror the training stack: `regularization` picks the
    constraint mode ("none", "bro", "gini", "both"); `bro_strength` and
    `gini_exponent` are its hyperparameters. `task_kinds` declares one of
    "classification" / "regression" per output column.
    """

    def __init__(self, hidden_dim=64, num_conv_layers=2, max_degree=5,
                 alphabet_size=None, task_kinds=("classification",),
                 regularization="none", bro_strength=1e-3, gini_exponent=5.0,
                 gini_floor=1e-3, epochs=40, batch_size=32, learning_rate=1e-3,
                 lr_decay_base=0.97, lr_decay_every=1000, random_state=0):
        self.hidden_dim = hidden_dim
        self.num_conv_layers = num_conv_layers
        self.max_degree = max_degree
        self.alphabet_size = alphabet_size
        self.task_kinds = task_kinds
        self.regularization = regularization
        self.bro_strength = bro_strength
        self.gini_exponent = gini_exponent
        self.gini_floor = gini_floor
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay_base = lr_decay_base
        self.lr_decay_every = lr_decay_every
        self.random_state = random_state

    def _resolve_alphabet(self, graphs: Sequence[Graph]) -> int:
        if self.alphabet_size is not None:
            return int(self.alphabet_size)
        if any(g.smiles is not None for g in graphs):
            return SMILES_ALPHABET_SIZE
        return max(max(g.node_labels) for g in graphs) + 1

    def fit(self, X, y=None):
        """Train on graphs X with targets y (or targets embedded in the graphs)."""
        graphs = as_graphs(X)
        task_kinds = tuple(self.task_kinds)
        if y is not None:
            targets, mask = targets_from_y(y, len(graphs))
            if targets.shape[1] != len(task_kinds):
                raise ValueError(f"y has {targets.shape[1]} columns for "
                                 f"{len(task_kinds)} task_kinds")
            graphs = tuple(
                Graph(g.node_labels, g.edges, g.ground_truth,
                      tuple(targets[i]), tuple(bool(b) for b in mask[i]), g.smiles)
                for i, g in enumerate(graphs)
            )
        dataset = Dataset(
            graphs=graphs,
            task_names=tuple(f"task_{j}" for j in range(len(task_kinds))),
            task_kinds=task_kinds,
        )
        self.config_ = ModelConfig(
            num_tasks=len(task_kinds),
            alphabet_size=self._resolve_alphabet(graphs),
            num_conv_layers=self.num_conv_layers,
            hidden_dim=self.hidden_dim,
            max_degree=self.max_degree,
            seed=self.random_state,
        )
        train_cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            base_lr=self.learning_rate,
            decay_base=self.lr_decay_base,
            decay_every=self.lr_decay_every,
            seed=self.random_state,
        )
        reg_cfg = RegularizerConfig(
            mode=self.regularization,
            lam=self.bro_strength,
            m=self.gini_exponent,
            g_floor=self.gini_floor,
        )
        self.params_, self.history_ = train(dataset, self.config_, train_cfg, reg_cfg)
        self.task_kinds_ = task_kinds
        return self

    def _batch(self, X):
        graphs = as_graphs(X)
        return graphs, make_batch(graphs, self.config_.alphabet_size, self.config_.max_degree)

    def predict(self, X) -> np.ndarray:
        """Per-task outputs: probabilities for classification columns, values
        for regression columns. Single-task models return a 1-D array."""
        check_is_fitted(self)
        _, batch = self._batch(X)
        out = model_predict(self.params_, batch, self.task_kinds_, config=self.config_)
        return out[:, 0] if out.shape[1] == 1 else out

    def decision_function(self, X) -> np.ndarray:
        """Raw pre-sigmoid logits for every task."""
        check_is_fitted(self)
        _, batch = self._batch(X)
        out = model_predict(self.params_, batch, None, config=self.config_)
        return out[:, 0] if out.shape[1] == 1 else out

    def explain(self, X, method: str = "cam", task: int = 0,
                random_state: int = 0) -> list[AttributionMap]:
        """Attribution maps for each graph in X by the chosen method."""
        check_is_fitted(self)
        graphs = as_graphs(X)
        rng = np.random.default_rng(random_state)
        return [
            attribute(self.params_, self.config_, g, method, task_index=task,
                      rng=rng, graph_ref=i)
            for i, g in enumerate(graphs)
        ]

    def score(self, X, y=None) -> float:
        """Mean per-task test metric: AUROC for classification, Pearson otherwise."""
        check_is_fitted(self)
        graphs = as_graphs(X)
        if y is not None:
            targets, mask = targets_from_y(y, len(graphs))
        else:
            targets, mask = targets_matrix(graphs, len(self.task_kinds_))
        logits = self.decision_function(graphs)
        if logits.ndim == 1:
            logits = logits.reshape(-1, 1)
        per_task = []
        for j, kind in enumerate(self.task_kinds_):
            observed = mask[:, j]
            if not observed.any():
                continue
            if kind == "classification":
                per_task.append(auroc(logits[observed, j], targets[observed, j] != 0))
            else:
                per_task.append(pearson(logits[observed, j], targets[observed, j]))
        if not per_task:
            raise ValueError("score requires at least one observed target")
        return float(np.mean(per_task))
