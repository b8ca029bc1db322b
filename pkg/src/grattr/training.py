"""ADAM training loop with staircase learning-rate decay and a masked
multi-task loss (squared error for regression tasks, logistic loss on the
logits for classification tasks).

One tape is built and swept per optimization step; tapes are discarded
afterwards. Everything is seeded: init, shuffling and batching, so a run is
reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import Dataset, targets_matrix
from .graphs import make_batch
from .model import ForwardArtifacts, ModelConfig, ModelParams, forward, init_params
from .regularizers import RegularizerConfig, bro_value, gini_value, total_loss


class TrainingDivergedError(RuntimeError):
    """The loss or a gradient went non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    base_lr: float = 1e-3
    decay_base: float = 0.97
    decay_every: int = 1000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.decay_base <= 1.0:
            raise ValueError("decay_base must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def lr_schedule(base_lr: float, step: int, decay_base: float = 0.97,
                decay_every: int = 1000) -> float:
    """Staircase decay: base_lr * decay_base ** floor(step / decay_every)."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return base_lr * decay_base ** (step // decay_every)


@dataclass
class AdamState:
    step: int
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]


def init_adam_state(params: ModelParams) -> AdamState:
    named = params.named_arrays()
    return AdamState(
        step=0,
        first_moment={k: np.zeros_like(v) for k, v in named.items()},
        second_moment={k: np.zeros_like(v) for k, v in named.items()},
    )


def adam_step(params: ModelParams, grads: dict[str, np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[ModelParams, AdamState]:
    """One ADAM update. Mutates params and state in place and returns them."""
    state.step += 1
    t = state.step
    for name, array in params.named_arrays().items():
        grad = grads[name]
        if not np.all(np.isfinite(grad)):
            raise TrainingDivergedError(f"non-finite gradient for parameter {name!r}")
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        array -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def task_loss(predictions: ad.Tensor, targets: np.ndarray, target_mask: np.ndarray,
              task_kinds: Sequence[str]) -> ad.Tensor:
    """Mean per-entry loss over observed entries only.

    Regression entries contribute squared error; classification entries
    contribute logistic loss on the logit. With nothing observed the loss is
    a constant 0 with no gradient.
    """
    targets = np.asarray(targets, dtype=np.float64)
    mask = np.asarray(target_mask, dtype=bool)
    if targets.shape != predictions.shape or mask.shape != predictions.shape:
        raise ad.DimensionError(
            f"task_loss: target shape {targets.shape} does not match predictions "
            f"{predictions.shape}"
        )
    is_cls = np.array([kind == "classification" for kind in task_kinds])
    if is_cls.shape[0] != predictions.shape[1]:
        raise ad.DimensionError(
            f"task_loss: {is_cls.shape[0]} task kinds for {predictions.shape[1]} tasks"
        )
    observed = int(mask.sum())
    if observed == 0:
        return predictions.tape.constant(0.0)
    mask_cls = mask & is_cls[None, :]
    mask_reg = mask & ~is_cls[None, :]
    terms = []
    if mask_reg.any():
        terms.append(ad.masked_squared_error(predictions, targets, mask_reg.astype(float)))
    if mask_cls.any():
        terms.append(ad.logistic_loss(predictions, targets, mask_cls.astype(float)))
    total = terms[0] if len(terms) == 1 else ad.add(terms[0], terms[1])
    return ad.scalar_multiply(total, 1.0 / observed)


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    step: int
    lr: float
    task_loss: float
    bro_loss: float
    g: float


@dataclass
class TrainingHistory:
    rows: list[HistoryRow] = field(default_factory=list)

    CSV_HEADER = "epoch,step,lr,task_loss,bro_loss,g"

    def to_csv_text(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(f"{r.epoch},{r.step},{r.lr!r},{r.task_loss!r},{r.bro_loss!r},{r.g!r}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")


def train(dataset: Dataset, model_cfg: ModelConfig, train_cfg: TrainConfig,
          reg_cfg: RegularizerConfig) -> tuple[ModelParams, TrainingHistory]:
    """Train on a dataset; returns final parameters and one history row per epoch.

    History records the epoch means of the task loss and of the orthonormality
    term, the Gini mean of the output weights at the end of the epoch, and the
    learning rate in effect there. Both diagnostics are logged whatever the
    mode, so runs under different constraints can be compared column for column.
    """
    if len(dataset) == 0:
        raise ValueError("train requires a non-empty dataset")
    params = init_params(model_cfg)
    state = init_adam_state(params)
    shuffle_rng = np.random.default_rng(train_cfg.seed)
    num_tasks = model_cfg.num_tasks
    history = TrainingHistory()
    global_step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(len(dataset))
        epoch_task_losses = []
        epoch_bro_losses = []
        for start in range(0, len(order), train_cfg.batch_size):
            batch_graphs = [dataset.graphs[i] for i in order[start:start + train_cfg.batch_size]]
            batch = make_batch(batch_graphs, model_cfg.alphabet_size, model_cfg.max_degree)
            targets, mask = targets_matrix(batch_graphs, num_tasks)
            lr = lr_schedule(train_cfg.base_lr, state.step,
                             train_cfg.decay_base, train_cfg.decay_every)
            artifacts = forward(params, batch, config=model_cfg)
            base = task_loss(artifacts.predictions, targets, mask, dataset.task_kinds)
            loss = total_loss(base, artifacts, reg_cfg)
            if not math.isfinite(loss.value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {global_step}"
                )
            grads_by_node = ad.backward(loss)
            grads = {
                name: grads_by_node[tensor.node_id]
                for name, tensor in artifacts.param_tensors.items()
            }
            adam_step(params, grads, state, lr,
                      train_cfg.adam_beta1, train_cfg.adam_beta2, train_cfg.adam_eps)
            epoch_task_losses.append(base.value)
            epoch_bro_losses.append(
                bro_value(artifacts.final_embeddings.data, batch.node_offsets, reg_cfg.lam)
            )
            global_step += 1
        history.rows.append(HistoryRow(
            epoch=epoch,
            step=global_step,
            lr=lr_schedule(train_cfg.base_lr, state.step,
                           train_cfg.decay_base, train_cfg.decay_every),
            task_loss=float(np.mean(epoch_task_losses)),
            bro_loss=float(np.mean(epoch_bro_losses)),
            g=gini_value(params.output_weights),
        ))
    return params, history
