"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

Every value is a row-major matrix; scalars are 1x1. Operations execute
eagerly and append a node to a Tape, which stores just enough saved state
to run one exact backward sweep. Tapes are cheap, single-use, and confined
to one execution context: build, call backward once, discard.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DimensionError",
    "GradCheckError",
    "Tape",
    "Tensor",
    "OP_KINDS",
    "apply_op",
    "backward",
    "grad_check",
    "matmul",
    "transpose",
    "add",
    "subtract",
    "scalar_multiply",
    "tanh",
    "absolute",
    "sigmoid",
    "row_mean_by_group",
    "sum_all",
    "frobenius_norm",
    "scalar_divide",
    "scalar_power",
    "masked_squared_error",
    "logistic_loss",
]

# Below this Frobenius norm the norm gradient is defined as zero (the true
# gradient a/||a|| is singular at the origin).
NORM_GRAD_FLOOR = 1e-12


class DimensionError(ValueError):
    """Input shapes do not conform to the requested operation."""


class GradCheckError(ValueError):
    """A finite-difference probe produced a non-finite value."""


class _Node:
    __slots__ = ("kind", "shape", "requires_grad", "backward_fn")

    def __init__(self, kind, shape, requires_grad, backward_fn):
        self.kind = kind
        self.shape = shape
        self.requires_grad = requires_grad
        # backward_fn: grad_out -> iterable of (input node_id, grad contribution);
        # None for leaves.
        self.backward_fn = backward_fn


class Tensor:
    """A 2-D float64 array recorded on a Tape."""

    __slots__ = ("data", "tape", "node_id", "requires_grad")

    def __init__(self, data: np.ndarray, tape: "Tape", node_id: int, requires_grad: bool):
        self.data = data
        self.tape = tape
        self.node_id = node_id
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def value(self) -> float:
        """The scalar value of a 1x1 tensor."""
        if self.data.shape != (1, 1):
            raise DimensionError(f"value: tensor has shape {self.data.shape}, not (1, 1)")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Append-only record of one differentiable computation."""

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self):
        return len(self._nodes)

    def _record(self, kind, data, requires_grad, backward_fn) -> Tensor:
        node_id = len(self._nodes)
        self._nodes.append(_Node(kind, data.shape, requires_grad, backward_fn))
        return Tensor(data, self, node_id, requires_grad)

    def tensor(self, values, requires_grad: bool = False) -> Tensor:
        """Create a leaf. Accepts scalars, 1-D (treated as a row), or 2-D input."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise DimensionError(f"tensor: expected at most 2 dimensions, got {arr.ndim}")
        return self._record("leaf", arr.copy(), requires_grad, None)

    def constant(self, values) -> Tensor:
        return self.tensor(values, requires_grad=False)


def _same_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ValueError("operands belong to different computation records")
    return tape


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product a @ b."""
    tape = _same_tape(a, b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.data @ b.data
    need_a, need_b = a.requires_grad, b.requires_grad
    a_data, b_data = a.data, b.data
    a_id, b_id = a.node_id, b.node_id

    def backward_fn(grad):
        contribs = []
        if need_a:
            contribs.append((a_id, grad @ b_data.T))
        if need_b:
            contribs.append((b_id, a_data.T @ grad))
        return contribs

    return tape._record("matmul", out, need_a or need_b, backward_fn)


def transpose(a: Tensor) -> Tensor:
    """Matrix transpose."""
    a_id = a.node_id
    return a.tape._record(
        "transpose", a.data.T.copy(), a.requires_grad,
        lambda grad: [(a_id, grad.T)],
    )


def _require_same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{kind}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    tape = _same_tape(a, b)
    _require_same_shape("add", a, b)
    need_a, need_b = a.requires_grad, b.requires_grad
    a_id, b_id = a.node_id, b.node_id

    def backward_fn(grad):
        contribs = []
        if need_a:
            contribs.append((a_id, grad))
        if need_b:
            contribs.append((b_id, grad))
        return contribs

    return tape._record("add", a.data + b.data, need_a or need_b, backward_fn)


def subtract(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise difference a - b of two same-shape tensors."""
    tape = _same_tape(a, b)
    _require_same_shape("subtract", a, b)
    need_a, need_b = a.requires_grad, b.requires_grad
    a_id, b_id = a.node_id, b.node_id

    def backward_fn(grad):
        contribs = []
        if need_a:
            contribs.append((a_id, grad))
        if need_b:
            contribs.append((b_id, -grad))
        return contribs

    return tape._record("subtract", a.data - b.data, need_a or need_b, backward_fn)


def scalar_multiply(a: Tensor, c: float) -> Tensor:
    """Multiply every entry by the constant c."""
    c = float(c)
    a_id = a.node_id
    return a.tape._record(
        "scalar-multiply", a.data * c, a.requires_grad,
        lambda grad: [(a_id, grad * c)],
    )


def tanh(a: Tensor) -> Tensor:
    """Elementwise hyperbolic tangent."""
    out = np.tanh(a.data)
    a_id = a.node_id
    return a.tape._record(
        "elementwise-tanh", out, a.requires_grad,
        lambda grad: [(a_id, grad * (1.0 - out * out))],
    )


def absolute(a: Tensor) -> Tensor:
    """Elementwise absolute value; subgradient 0 at 0."""
    sign = np.sign(a.data)
    a_id = a.node_id
    return a.tape._record(
        "elementwise-abs", np.abs(a.data), a.requires_grad,
        lambda grad: [(a_id, grad * sign)],
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Stable in both tails.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    """Elementwise logistic function."""
    out = _sigmoid(a.data)
    a_id = a.node_id
    return a.tape._record(
        "elementwise-sigmoid", out, a.requires_grad,
        lambda grad: [(a_id, grad * out * (1.0 - out))],
    )


def row_mean_by_group(a: Tensor, membership: Sequence[int], num_groups: int) -> Tensor:
    """Grouped mean pooling: output row g is the mean of input rows with membership g."""
    member = np.asarray(membership, dtype=np.intp)
    if member.shape != (a.shape[0],):
        raise DimensionError(
            f"row-mean-by-group: membership length {member.shape} does not match rows of {a.shape}"
        )
    if num_groups < 1 or (member.size and (member.min() < 0 or member.max() >= num_groups)):
        raise DimensionError("row-mean-by-group: membership indices outside group range")
    counts = np.bincount(member, minlength=num_groups).astype(np.float64)
    if np.any(counts == 0):
        raise DimensionError("row-mean-by-group: every group must contain at least one row")
    sums = np.zeros((num_groups, a.shape[1]))
    np.add.at(sums, member, a.data)
    out = sums / counts[:, None]
    a_id = a.node_id

    def backward_fn(grad):
        return [(a_id, grad[member] / counts[member][:, None])]

    return a.tape._record("row-mean-by-group", out, a.requires_grad, backward_fn)


def sum_all(a: Tensor) -> Tensor:
    """Sum of all entries, as a 1x1 tensor."""
    out = np.array([[a.data.sum()]])
    a_id = a.node_id
    shape = a.shape
    return a.tape._record(
        "sum-all", out, a.requires_grad,
        lambda grad: [(a_id, np.full(shape, grad[0, 0]))],
    )


def frobenius_norm(a: Tensor) -> Tensor:
    """2-norm of the flattened matrix; gradient defined as 0 below NORM_GRAD_FLOOR."""
    norm = float(np.sqrt((a.data * a.data).sum()))
    a_id = a.node_id
    a_data = a.data

    def backward_fn(grad):
        if norm < NORM_GRAD_FLOOR:
            return [(a_id, np.zeros_like(a_data))]
        return [(a_id, grad[0, 0] * a_data / norm)]

    return a.tape._record("frobenius-norm", np.array([[norm]]), a.requires_grad, backward_fn)


def _require_scalar(kind: str, t: Tensor) -> None:
    if t.shape != (1, 1):
        raise DimensionError(f"{kind}: expected a 1x1 tensor, got {t.shape}")


def scalar_divide(a: Tensor, b: Tensor) -> Tensor:
    """Quotient of two 1x1 tensors."""
    tape = _same_tape(a, b)
    _require_scalar("scalar-divide", a)
    _require_scalar("scalar-divide", b)
    av, bv = a.data[0, 0], b.data[0, 0]
    need_a, need_b = a.requires_grad, b.requires_grad
    a_id, b_id = a.node_id, b.node_id

    def backward_fn(grad):
        contribs = []
        if need_a:
            contribs.append((a_id, grad / bv))
        if need_b:
            contribs.append((b_id, -grad * av / (bv * bv)))
        return contribs

    return tape._record("scalar-divide", np.array([[av / bv]]), need_a or need_b, backward_fn)


def scalar_power(a: Tensor, p: float) -> Tensor:
    """A 1x1 tensor raised to the constant power p."""
    _require_scalar("scalar-power", a)
    p = float(p)
    av = a.data[0, 0]
    a_id = a.node_id
    return a.tape._record(
        "scalar-power", np.array([[av ** p]]), a.requires_grad,
        lambda grad: [(a_id, grad * p * av ** (p - 1.0))],
    )


def masked_squared_error(pred: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Sum over masked-in entries of (pred - target)^2; target and mask are constants."""
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if target.shape != pred.shape or mask.shape != pred.shape:
        raise DimensionError(
            f"masked-squared-error: incompatible shapes {pred.shape} and {target.shape}"
        )
    out = np.array([[((pred.data - target) ** 2 * mask).sum()]])
    pred_id = pred.node_id
    pred_data = pred.data

    def backward_fn(grad):
        return [(pred_id, grad[0, 0] * 2.0 * mask * (pred_data - target))]

    return pred.tape._record("masked-squared-error", out, pred.requires_grad, backward_fn)


def logistic_loss(logits: Tensor, target: np.ndarray, mask: np.ndarray) -> Tensor:
    """Sum over masked-in entries of log(1 + e^z) - z*t; target and mask are constants."""
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if target.shape != logits.shape or mask.shape != logits.shape:
        raise DimensionError(
            f"logistic-loss: incompatible shapes {logits.shape} and {target.shape}"
        )
    z = logits.data
    per_entry = np.maximum(z, 0.0) - z * target + np.log1p(np.exp(-np.abs(z)))
    out = np.array([[(per_entry * mask).sum()]])
    logits_id = logits.node_id

    def backward_fn(grad):
        return [(logits_id, grad[0, 0] * mask * (_sigmoid(z) - target))]

    return logits.tape._record("logistic-loss", out, logits.requires_grad, backward_fn)


OP_KINDS = {
    "matmul": matmul,
    "transpose": transpose,
    "add": add,
    "subtract": subtract,
    "scalar-multiply": scalar_multiply,
    "elementwise-tanh": tanh,
    "elementwise-abs": absolute,
    "elementwise-sigmoid": sigmoid,
    "row-mean-by-group": row_mean_by_group,
    "sum-all": sum_all,
    "frobenius-norm": frobenius_norm,
    "scalar-divide": scalar_divide,
    "scalar-power": scalar_power,
    "masked-squared-error": masked_squared_error,
    "logistic-loss": logistic_loss,
}


def apply_op(kind: str, *inputs, **params) -> Tensor:
    """Dispatch an operation by kind name. See OP_KINDS for the supported set."""
    try:
        fn = OP_KINDS[kind]
    except KeyError:
        raise ValueError(f"unsupported op kind {kind!r}") from None
    return fn(*inputs, **params)


def backward(loss: Tensor, include: Sequence[Tensor] = ()) -> dict[int, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every requires_grad leaf on its tape.

    Leaves that the loss does not depend on get zero gradients. Tensors passed
    in `include` (leaf or intermediate) are added to the result as well.
    Returns a map from node id to a gradient array of the node's shape.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward requires a scalar (1x1) loss, got shape {loss.shape}")
    nodes = loss.tape._nodes
    grads: list[np.ndarray | None] = [None] * len(nodes)
    grads[loss.node_id] = np.ones((1, 1))
    for node_id in range(loss.node_id, -1, -1):
        grad = grads[node_id]
        node = nodes[node_id]
        if grad is None or node.backward_fn is None:
            continue
        for input_id, contrib in node.backward_fn(grad):
            if grads[input_id] is None:
                grads[input_id] = np.array(contrib, dtype=np.float64)
            else:
                grads[input_id] = grads[input_id] + contrib
    result: dict[int, np.ndarray] = {}
    for node_id, node in enumerate(nodes):
        if node.backward_fn is None and node.requires_grad:
            g = grads[node_id]
            result[node_id] = np.zeros(node.shape) if g is None else g
    for t in include:
        if t.tape is not loss.tape:
            raise ValueError("included tensor belongs to a different computation record")
        g = grads[t.node_id]
        result[t.node_id] = np.zeros(t.shape) if g is None else g
    return result


def _scalar_eval(f: Callable[[Tensor], Tensor], values: np.ndarray) -> float:
    tape = Tape()
    out = f(tape.tensor(values, requires_grad=True))
    if out.shape != (1, 1):
        raise ValueError(f"grad_check: f must return a scalar, got shape {out.shape}")
    return float(out.data[0, 0])


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max relative error between the analytic gradient of f and central differences.

    f must be a deterministic scalar-valued function of one tensor. The
    relative error at each coordinate is |analytic - numeric| / max(1e-8, |numeric|).
    """
    if eps <= 0:
        raise ValueError("grad_check: eps must be positive")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    tape = Tape()
    xt = tape.tensor(x, requires_grad=True)
    out = f(xt)
    if out.shape != (1, 1):
        raise ValueError(f"grad_check: f must return a scalar, got shape {out.shape}")
    analytic = backward(out)[xt.node_id]
    worst = 0.0
    for idx in np.ndindex(*x.shape):
        plus = x.copy()
        plus[idx] += eps
        minus = x.copy()
        minus[idx] -= eps
        f_plus = _scalar_eval(f, plus)
        f_minus = _scalar_eval(f, minus)
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise GradCheckError(f"f is non-finite when probing coordinate {idx}")
        numeric = (f_plus - f_minus) / (2.0 * eps)
        rel = abs(analytic[idx] - numeric) / max(1e-8, abs(numeric))
        worst = max(worst, rel)
    return worst
