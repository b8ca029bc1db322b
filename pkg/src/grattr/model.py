"""The fixed model family: stacked graph convolutions, global average pooling,
a tanh squashing of the pooled encoding, and a single linear multi-task head.

Every forward pass records all intermediates on a Tape so training and
gradient-based attribution can run one exact backward sweep. Per-layer node
embeddings are exposed for attribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .graphs import Batch

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_tasks: int
    alphabet_size: int
    num_conv_layers: int = 2
    hidden_dim: int = 64
    max_degree: int = 5
    # "identity" disables the pre-head tanh so the head becomes an exact
    # linear decomposition of the logit; used for score diagnostics.
    head_activation: str = "tanh"
    seed: int = 0

    def __post_init__(self):
        if self.num_conv_layers < 1 or self.hidden_dim < 1 or self.num_tasks < 1:
            raise ValueError("num_conv_layers, hidden_dim and num_tasks must all be >= 1")
        if self.head_activation not in ("tanh", "identity"):
            raise ValueError(f"unknown head_activation {self.head_activation!r}")

    @property
    def in_dim(self) -> int:
        return self.alphabet_size + self.max_degree + 1


@dataclass
class ModelParams:
    """All learnable arrays. output_weights holds one row per task."""

    conv_weights: list[np.ndarray]
    conv_biases: list[np.ndarray]
    output_weights: np.ndarray
    output_bias: np.ndarray

    def named_arrays(self) -> dict[str, np.ndarray]:
        named = {}
        for l, (w, b) in enumerate(zip(self.conv_weights, self.conv_biases)):
            named[f"conv_weights.{l}"] = w
            named[f"conv_biases.{l}"] = b
        named["output_weights"] = self.output_weights
        named["output_bias"] = self.output_bias
        return named

    def copy(self) -> "ModelParams":
        return ModelParams(
            conv_weights=[w.copy() for w in self.conv_weights],
            conv_biases=[b.copy() for b in self.conv_biases],
            output_weights=self.output_weights.copy(),
            output_bias=self.output_bias.copy(),
        )


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: ModelConfig, rng: np.random.Generator | None = None) -> ModelParams:
    """Glorot-uniform weights, zero biases; deterministic given config.seed."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    conv_weights = []
    conv_biases = []
    d_in = config.in_dim
    for _ in range(config.num_conv_layers):
        conv_weights.append(_glorot(rng, d_in, config.hidden_dim))
        conv_biases.append(np.zeros((1, config.hidden_dim)))
        d_in = config.hidden_dim
    return ModelParams(
        conv_weights=conv_weights,
        conv_biases=conv_biases,
        output_weights=_glorot(rng, config.num_tasks, config.hidden_dim),
        output_bias=np.zeros((1, config.num_tasks)),
    )


@dataclass
class ForwardArtifacts:
    """Recorded tensors from one forward pass plus the plumbing to reach them."""

    per_layer_embeddings: list[ad.Tensor]
    final_embeddings: ad.Tensor
    pooled: ad.Tensor
    predictions: ad.Tensor
    param_tensors: dict[str, ad.Tensor]
    node_offsets: tuple[int, ...]
    tape: ad.Tape = field(repr=False)


def forward(params: ModelParams, batch: Batch, tape: ad.Tape | None = None,
            config: ModelConfig | None = None) -> ForwardArtifacts:
    """Run the model on a batch, recording everything for backward.

    Layer rule: H^(l) = tanh(A_hat @ H^(l-1) @ W_l + b_l) with H^(0) the node
    features. Predictions are pre-sigmoid logits; the evaluation-time sigmoid
    for classification tasks is applied by predict().
    """
    head_activation = config.head_activation if config is not None else "tanh"
    if tape is None:
        tape = ad.Tape()
    if batch.features.shape[1] != params.conv_weights[0].shape[0]:
        raise ad.DimensionError(
            f"forward: feature dim {batch.features.shape[1]} does not match "
            f"first conv weight {params.conv_weights[0].shape}"
        )
    param_tensors = {
        name: tape.tensor(arr, requires_grad=True)
        for name, arr in params.named_arrays().items()
    }
    a_hat = tape.constant(batch.normalized_adjacency)
    ones_nodes = tape.constant(np.ones((batch.num_nodes, 1)))
    h = tape.constant(batch.features)
    per_layer = []
    for l in range(len(params.conv_weights)):
        propagated = ad.matmul(a_hat, h)
        mixed = ad.matmul(propagated, param_tensors[f"conv_weights.{l}"])
        biased = ad.add(mixed, ad.matmul(ones_nodes, param_tensors[f"conv_biases.{l}"]))
        h = ad.tanh(biased)
        per_layer.append(h)
    pooled = ad.row_mean_by_group(h, batch.membership, batch.num_graphs)
    encoded = ad.tanh(pooled) if head_activation == "tanh" else pooled
    ones_graphs = tape.constant(np.ones((batch.num_graphs, 1)))
    predictions = ad.add(
        ad.matmul(encoded, ad.transpose(param_tensors["output_weights"])),
        ad.matmul(ones_graphs, param_tensors["output_bias"]),
    )
    return ForwardArtifacts(
        per_layer_embeddings=per_layer,
        final_embeddings=h,
        pooled=pooled,
        predictions=predictions,
        param_tensors=param_tensors,
        node_offsets=batch.node_offsets,
        tape=tape,
    )


def gap(node_embeddings: np.ndarray, membership) -> np.ndarray:
    """Global average pooling over plain arrays: row g is the mean of group g's rows."""
    member = np.asarray(membership, dtype=np.intp)
    num_groups = int(member.max()) + 1 if member.size else 0
    tape = ad.Tape()
    return ad.row_mean_by_group(tape.constant(node_embeddings), member, num_groups).data


def predict(params: ModelParams, batch: Batch, task_kinds: tuple[str, ...] | None = None,
            config: ModelConfig | None = None) -> np.ndarray:
    """Per-graph per-task outputs; classification columns pass through a sigmoid."""
    logits = forward(params, batch, config=config).predictions.data.copy()
    if task_kinds is not None:
        for j, kind in enumerate(task_kinds):
            if kind == "classification":
                logits[:, j] = 1.0 / (1.0 + np.exp(-logits[:, j]))
    return logits


def save_checkpoint(path: str | Path, config: ModelConfig, params: ModelParams) -> None:
    """Write config plus parameters as JSON; floats round-trip bit-exactly."""
    blob = {
        "format_version": CHECKPOINT_VERSION,
        "config": {
            "num_tasks": config.num_tasks,
            "alphabet_size": config.alphabet_size,
            "num_conv_layers": config.num_conv_layers,
            "hidden_dim": config.hidden_dim,
            "max_degree": config.max_degree,
            "head_activation": config.head_activation,
            "seed": config.seed,
        },
        "params": {
            "conv_weights": [w.tolist() for w in params.conv_weights],
            "conv_biases": [b.tolist() for b in params.conv_biases],
            "output_weights": params.output_weights.tolist(),
            "output_bias": params.output_bias.tolist(),
        },
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True, separators=(",", ":")) + "\n",
                          encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, ModelParams]:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    version = blob.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    config = ModelConfig(**blob["config"])
    raw = blob["params"]
    params = ModelParams(
        conv_weights=[np.array(w) for w in raw["conv_weights"]],
        conv_biases=[np.array(b) for b in raw["conv_biases"]],
        output_weights=np.array(raw["output_weights"]),
        output_bias=np.array(raw["output_bias"]),
    )
    return config, params
