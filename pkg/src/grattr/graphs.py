"""Labeled undirected graphs, node featurization, and mini-batch assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

BOND_ORDERS = ("single", "double", "triple", "aromatic")


class GraphDataError(ValueError):
    """A graph violates a structural or data constraint."""


def _normalize_edge(i: int, j: int, order: str) -> tuple[int, int, str]:
    return (i, j, order) if i < j else (j, i, order)


@dataclass(frozen=True)
class Graph:
    """Undirected graph with categorical node labels and tagged bond orders.

    Optional per-node ground-truth attribution (a mask or per-node
    contribution vector), per-task targets, and a per-task observation mask.
    Masked-out target entries are normalized to 0.0 so serialization is
    lossless. Instances are immutable and safe to share across contexts.
    """

    node_labels: tuple[int, ...]
    edges: tuple[tuple[int, int, str], ...] = ()
    ground_truth: tuple[float, ...] | None = None
    targets: tuple[float, ...] | None = None
    target_mask: tuple[bool, ...] | None = None
    smiles: str | None = None

    def __post_init__(self):
        n = len(self.node_labels)
        object.__setattr__(self, "node_labels", tuple(int(x) for x in self.node_labels))
        seen = set()
        norm_edges = []
        for i, j, order in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise GraphDataError(f"edge ({i}, {j}) endpoint outside [0, {n})")
            if i == j:
                raise GraphDataError(f"self-loop on node {i}")
            if order not in BOND_ORDERS:
                raise GraphDataError(f"unknown bond order {order!r} on edge ({i}, {j})")
            edge = _normalize_edge(int(i), int(j), order)
            if edge[:2] in seen:
                raise GraphDataError(f"duplicate edge ({edge[0]}, {edge[1]})")
            seen.add(edge[:2])
            norm_edges.append(edge)
        object.__setattr__(self, "edges", tuple(norm_edges))
        if self.ground_truth is not None:
            gt = tuple(float(x) for x in self.ground_truth)
            if len(gt) != n:
                raise GraphDataError(
                    f"ground_truth length {len(gt)} does not match node count {n}"
                )
            object.__setattr__(self, "ground_truth", gt)
        if self.targets is not None:
            targets = tuple(float(x) for x in self.targets)
            if self.target_mask is not None:
                mask = tuple(bool(b) for b in self.target_mask)
                if len(mask) != len(targets):
                    raise GraphDataError(
                        f"target_mask length {len(mask)} does not match targets length {len(targets)}"
                    )
                targets = tuple(t if m else 0.0 for t, m in zip(targets, mask))
                object.__setattr__(self, "target_mask", mask)
            object.__setattr__(self, "targets", targets)
        elif self.target_mask is not None:
            raise GraphDataError("target_mask given without targets")

    @property
    def num_nodes(self) -> int:
        return len(self.node_labels)

    def degrees(self) -> np.ndarray:
        """Node degrees of the stored graph (no self-loops)."""
        deg = np.zeros(self.num_nodes, dtype=np.intp)
        for i, j, _ in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


def normalize_adjacency(graph: Graph) -> np.ndarray:
    """Symmetrically normalized adjacency with self-loops: D^-1/2 (A + I) D^-1/2.

    Bond orders are ignored for propagation; A is binary. Isolated nodes end
    up with a bare self-loop entry of 1.
    """
    n = graph.num_nodes
    a = np.eye(n)
    for i, j, _ in graph.edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    inv_sqrt_deg = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]


def featurize(graph: Graph, alphabet_size: int, max_degree: int) -> np.ndarray:
    """One-hot label plus one-hot clamped degree, one row per node.

    Row i is onehot(label_i) concatenated with onehot(min(degree_i, max_degree)),
    giving alphabet_size + max_degree + 1 columns.
    """
    n = graph.num_nodes
    features = np.zeros((n, alphabet_size + max_degree + 1))
    degrees = graph.degrees()
    for i, label in enumerate(graph.node_labels):
        if not 0 <= label < alphabet_size:
            raise GraphDataError(
                f"node {i} has label {label} outside alphabet of size {alphabet_size}"
            )
        features[i, label] = 1.0
        features[i, alphabet_size + min(int(degrees[i]), max_degree)] = 1.0
    return features


@dataclass(frozen=True)
class Batch:
    """A block-diagonal stack of graphs ready for one forward pass.

    node_offsets has one entry per graph plus a final sentinel equal to the
    total node count, so graph g occupies rows [node_offsets[g], node_offsets[g+1]).
    """

    graphs: tuple[Graph, ...]
    membership: np.ndarray = field(repr=False)
    normalized_adjacency: np.ndarray = field(repr=False)
    features: np.ndarray = field(repr=False)
    node_offsets: tuple[int, ...] = ()

    @property
    def num_nodes(self) -> int:
        return int(self.membership.shape[0])

    @property
    def num_graphs(self) -> int:
        return len(self.graphs)


def make_batch(graphs: Sequence[Graph], alphabet_size: int, max_degree: int = 5) -> Batch:
    """Assemble graphs into one batch with block-diagonal normalized adjacency."""
    graphs = tuple(graphs)
    if not graphs:
        raise GraphDataError("make_batch requires at least one graph")
    offsets = [0]
    for g in graphs:
        offsets.append(offsets[-1] + g.num_nodes)
    total = offsets[-1]
    adjacency = np.zeros((total, total))
    feature_blocks = []
    membership = np.zeros(total, dtype=np.intp)
    for idx, g in enumerate(graphs):
        start, end = offsets[idx], offsets[idx + 1]
        adjacency[start:end, start:end] = normalize_adjacency(g)
        feature_blocks.append(featurize(g, alphabet_size, max_degree))
        membership[start:end] = idx
    return Batch(
        graphs=graphs,
        membership=membership,
        normalized_adjacency=adjacency,
        features=np.vstack(feature_blocks),
        node_offsets=tuple(offsets),
    )
