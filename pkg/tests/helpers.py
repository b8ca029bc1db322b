"""Shared brute-force oracles and fixtures used across the test modules.

Everything here is deliberately written as the dumbest possible version of
each quantity (double loops, direct formulas) so the library can be checked
against an independent path.
"""

from __future__ import annotations

import numpy as np

from grattr import autodiff as ad
from grattr.data import Dataset, targets_matrix
from grattr.graphs import Graph, make_batch
from grattr.model import ModelConfig, ModelParams, forward, init_params
from grattr.regularizers import RegularizerConfig, total_loss
from grattr.training import task_loss


def brute_force_auroc(scores, labels) -> float:
    """Pairwise counting: ties between a positive and a negative count 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos = scores[labels]
    neg = scores[~labels]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def brute_force_pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mx, my = x.mean(), y.mean()
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    den = np.sqrt(sum((a - mx) ** 2 for a in x)) * np.sqrt(sum((b - my) ** 2 for b in y))
    return float(num / den)


def brute_force_gini(values) -> float:
    """Eq-by-eq double loop over |values|."""
    v = np.abs(np.asarray(values, dtype=np.float64))
    n = v.size
    mean = v.mean()
    if mean < 1e-12:
        return 0.0
    total = 0.0
    for a in v:
        for b in v:
            total += abs(a - b)
    return total / (2.0 * (n * n - n) * mean)


def brute_force_quantile(values, q: float) -> float:
    """Sort-based quantile with linear interpolation at q*(n-1)."""
    ordered = sorted(float(v) for v in values)
    pos = q * (len(ordered) - 1)
    low = int(np.floor(pos))
    high = int(np.ceil(pos))
    return ordered[low] + (ordered[high] - ordered[low]) * (pos - low)


def scripted_adam_reference(grads_per_step, lr_per_step, beta1=0.9, beta2=0.999,
                            eps=1e-8, theta0=0.0):
    """Straight-line scalar ADAM recurrence, independent of the library."""
    theta = theta0
    m = 0.0
    v = 0.0
    for t, (g, lr) in enumerate(zip(grads_per_step, lr_per_step), start=1):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def tiny_classification_setup(seed=0, hidden_dim=4, num_graphs=2):
    """A frozen tiny model + batch for full-model finite-difference checks."""
    rng = np.random.default_rng(seed)
    graphs = []
    for _ in range(num_graphs):
        n = int(rng.integers(3, 5))
        edges = tuple((int(rng.integers(0, i)), i, "single") for i in range(1, n))
        graphs.append(Graph(
            node_labels=tuple(int(x) for x in rng.integers(0, 2, size=n)),
            edges=edges,
            targets=(float(rng.integers(0, 2)),),
            target_mask=(True,),
        ))
    dataset = Dataset(tuple(graphs), ("toy",), ("classification",))
    config = ModelConfig(num_tasks=1, alphabet_size=2, hidden_dim=hidden_dim,
                         max_degree=2, seed=seed)
    params = init_params(config)
    batch = make_batch(graphs, config.alphabet_size, config.max_degree)
    return dataset, config, params, batch


def model_loss_value(params: ModelParams, config, batch, dataset,
                     reg_cfg: RegularizerConfig) -> float:
    artifacts = forward(params, batch, config=config)
    targets, mask = targets_matrix(batch.graphs, config.num_tasks)
    base = task_loss(artifacts.predictions, targets, mask, dataset.task_kinds)
    return total_loss(base, artifacts, reg_cfg).value


def model_grad_max_rel_err(config, params, batch, dataset, reg_cfg,
                           eps: float = 1e-5) -> float:
    """Central finite differences over every model parameter coordinate."""
    artifacts = forward(params, batch, config=config)
    targets, mask = targets_matrix(batch.graphs, config.num_tasks)
    base = task_loss(artifacts.predictions, targets, mask, dataset.task_kinds)
    loss = total_loss(base, artifacts, reg_cfg)
    grads_by_node = ad.backward(loss)
    worst = 0.0
    for name, array in params.named_arrays().items():
        analytic = grads_by_node[artifacts.param_tensors[name].node_id]
        for idx in np.ndindex(*array.shape):
            keep = array[idx]
            array[idx] = keep + eps
            f_plus = model_loss_value(params, config, batch, dataset, reg_cfg)
            array[idx] = keep - eps
            f_minus = model_loss_value(params, config, batch, dataset, reg_cfg)
            array[idx] = keep
            numeric = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(analytic[idx] - numeric) / max(1e-8, abs(numeric))
            worst = max(worst, rel)
    return worst


def random_graph(rng: np.random.Generator, min_nodes=2, max_nodes=10,
                 alphabet_size=4, with_ground_truth=False, num_tasks=0) -> Graph:
    n = int(rng.integers(min_nodes, max_nodes + 1))
    edges = [(int(rng.integers(0, i)), i, "single") for i in range(1, n)]
    targets = mask = None
    if num_tasks:
        mask = tuple(bool(b) for b in rng.integers(0, 2, size=num_tasks))
        targets = tuple(float(t) if m else 0.0
                        for t, m in zip(rng.normal(size=num_tasks), mask))
    return Graph(
        node_labels=tuple(int(x) for x in rng.integers(0, alphabet_size, size=n)),
        edges=tuple(edges),
        ground_truth=tuple(float(x) for x in rng.normal(size=n)) if with_ground_truth else None,
        targets=targets,
        target_mask=mask,
    )
