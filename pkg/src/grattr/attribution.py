"""Node attribution maps: dot-product maps against the output head (cam),
the single-strongest-weight variant (toprep), gradient-weighted maps over
conv layers (gradcam), and a random baseline.

All scores are signed; no rectification is applied, so diverging renderings
keep both directions. Gradient maps are taken with respect to the task
logit, before any evaluation-time sigmoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graphs import Graph, make_batch
from .model import ModelConfig, ModelParams, forward

METHODS = ("cam", "toprep", "gradcam_last", "gradcam_all", "random")


@dataclass(frozen=True)
class AttributionMap:
    method: str
    task_index: int
    scores: tuple[float, ...]
    graph_ref: int | str = -1

    def __post_init__(self):
        scores = tuple(float(s) for s in self.scores)
        if not all(np.isfinite(scores)):
            raise ValueError("attribution scores must be finite")
        object.__setattr__(self, "scores", scores)

    def to_json_record(self) -> dict:
        return {
            "graph": self.graph_ref,
            "method": self.method,
            "task": self.task_index,
            "scores": list(self.scores),
        }


def cam(final_embeddings: np.ndarray, weight_row: np.ndarray, task_index: int,
        graph_ref: int | str = -1) -> AttributionMap:
    """Score node i as the dot product of its final embedding with the task's
    output-weight row."""
    final_embeddings = np.asarray(final_embeddings, dtype=np.float64)
    weight_row = np.asarray(weight_row, dtype=np.float64).reshape(-1)
    if final_embeddings.shape[1] != weight_row.shape[0]:
        raise ValueError(
            f"cam: embedding width {final_embeddings.shape[1]} does not match "
            f"weight row length {weight_row.shape[0]}"
        )
    scores = final_embeddings @ weight_row
    return AttributionMap("cam", task_index, tuple(scores), graph_ref)


def toprep_row(weight_row: np.ndarray) -> np.ndarray:
    """Keep only the largest-magnitude entry (first index on ties), zero the rest."""
    weight_row = np.asarray(weight_row, dtype=np.float64).reshape(-1)
    if weight_row.size < 1:
        raise ValueError("toprep requires a non-empty weight row")
    masked = np.zeros_like(weight_row)
    keep = int(np.argmax(np.abs(weight_row)))
    masked[keep] = weight_row[keep]
    return masked


def toprep(final_embeddings: np.ndarray, weight_row: np.ndarray, task_index: int,
           graph_ref: int | str = -1) -> AttributionMap:
    """cam restricted to the single largest-magnitude output weight."""
    inner = cam(final_embeddings, toprep_row(weight_row), task_index, graph_ref)
    return AttributionMap("toprep", task_index, inner.scores, graph_ref)


def gradcam(params: ModelParams, config: ModelConfig, graph: Graph, task_index: int,
            scope: str = "last", graph_ref: int | str = -1) -> AttributionMap:
    """Gradient-weighted attribution for one graph.

    For layer l, channel weight alpha_k is the node-averaged gradient of the
    task logit w.r.t. that layer's embeddings; the layer score of node i is
    sum_k alpha_k * h_ik. Scope "last" uses the final conv layer only;
    "all" averages the layer scores over every conv layer.
    """
    if scope not in ("last", "all"):
        raise ValueError(f"gradcam scope must be 'last' or 'all', got {scope!r}")
    batch = make_batch([graph], config.alphabet_size, config.max_degree)
    artifacts = forward(params, batch, config=config)
    tape = artifacts.tape
    selector = np.zeros((config.num_tasks, 1))
    selector[task_index, 0] = 1.0
    logit = ad.matmul(artifacts.predictions, tape.constant(selector))
    grads = ad.backward(logit, include=artifacts.per_layer_embeddings)
    layers = (
        artifacts.per_layer_embeddings[-1:] if scope == "last"
        else artifacts.per_layer_embeddings
    )
    layer_scores = []
    for h in layers:
        grad = grads[h.node_id]
        alpha = grad.mean(axis=0)
        layer_scores.append(h.data @ alpha)
    scores = np.mean(layer_scores, axis=0)
    method = "gradcam_last" if scope == "last" else "gradcam_all"
    return AttributionMap(method, task_index, tuple(scores), graph_ref)


def random_attr(graph: Graph, rng: np.random.Generator, task_index: int = 0,
                graph_ref: int | str = -1) -> AttributionMap:
    """I.i.d. uniform scores in [-1, 1]; deterministic per rng state."""
    scores = rng.uniform(-1.0, 1.0, size=graph.num_nodes)
    return AttributionMap("random", task_index, tuple(scores), graph_ref)


def attribute(params: ModelParams, config: ModelConfig, graph: Graph, method: str,
              task_index: int = 0, rng: np.random.Generator | None = None,
              graph_ref: int | str = -1) -> AttributionMap:
    """Compute one attribution map by method name."""
    if method == "random":
        if rng is None:
            raise ValueError("random attribution requires a seeded rng")
        return random_attr(graph, rng, task_index, graph_ref)
    if method in ("gradcam_last", "gradcam_all"):
        scope = "last" if method == "gradcam_last" else "all"
        return gradcam(params, config, graph, task_index, scope, graph_ref)
    batch = make_batch([graph], config.alphabet_size, config.max_degree)
    embeddings = forward(params, batch, config=config).final_embeddings.data
    row = params.output_weights[task_index]
    if method == "cam":
        return cam(embeddings, row, task_index, graph_ref)
    if method == "toprep":
        return toprep(embeddings, row, task_index, graph_ref)
    raise ValueError(f"unknown attribution method {method!r}")
