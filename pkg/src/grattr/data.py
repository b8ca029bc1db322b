"""Dataset container and its JSON-Lines interchange format.

File layout: a header line {"task_names": [...], "task_kinds": [...],
"provenance": "..."} followed by one graph per line:

    {"labels": [...], "edges": [[i, j, "single"], ...],
     "targets": [float|null, ...] | null,
     "ground_truth": [...] | null, "smiles": "..."}

Nulls inside "targets" mark masked-out entries. Writing then loading
reproduces a Dataset exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .graphs import Graph

TASK_KINDS = ("classification", "regression")


class DatasetFormatError(ValueError):
    """Schema violation in a dataset file, naming the line and field."""


@dataclass(frozen=True)
class Dataset:
    graphs: tuple[Graph, ...]
    task_names: tuple[str, ...] = ()
    task_kinds: tuple[str, ...] = ()
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "task_names", tuple(self.task_names))
        object.__setattr__(self, "task_kinds", tuple(self.task_kinds))
        if len(self.task_names) != len(self.task_kinds):
            raise DatasetFormatError(
                f"{len(self.task_names)} task names but {len(self.task_kinds)} task kinds"
            )
        for kind in self.task_kinds:
            if kind not in TASK_KINDS:
                raise DatasetFormatError(f"unknown task kind {kind!r}")
        for idx, g in enumerate(self.graphs):
            if g.targets is not None and len(g.targets) != self.num_tasks:
                raise DatasetFormatError(
                    f"graph {idx} has {len(g.targets)} targets for {self.num_tasks} tasks"
                )

    @property
    def num_tasks(self) -> int:
        return len(self.task_names)

    def __len__(self) -> int:
        return len(self.graphs)


def _graph_to_record(graph: Graph) -> dict:
    if graph.targets is None:
        targets = None
    else:
        mask = graph.target_mask or (True,) * len(graph.targets)
        targets = [t if m else None for t, m in zip(graph.targets, mask)]
    record = {
        "labels": list(graph.node_labels),
        "edges": [[i, j, order] for i, j, order in graph.edges],
        "targets": targets,
        "ground_truth": list(graph.ground_truth) if graph.ground_truth is not None else None,
    }
    if graph.smiles is not None:
        record["smiles"] = graph.smiles
    return record


def _record_to_graph(record: dict, line_no: int) -> Graph:
    def fail(field: str, why: str) -> DatasetFormatError:
        return DatasetFormatError(f"line {line_no}: field {field!r} {why}")

    for field in ("labels", "edges"):
        if field not in record:
            raise fail(field, "is missing")
    labels = record["labels"]
    if not isinstance(labels, list) or not all(isinstance(x, int) for x in labels):
        raise fail("labels", "must be a list of integers")
    edges = record["edges"]
    if not isinstance(edges, list):
        raise fail("edges", "must be a list")
    parsed_edges = []
    for e in edges:
        if not (isinstance(e, list) and len(e) == 3):
            raise fail("edges", "entries must be [i, j, order] triples")
        parsed_edges.append((e[0], e[1], e[2]))
    raw_targets = record.get("targets")
    targets = mask = None
    if raw_targets is not None:
        if not isinstance(raw_targets, list):
            raise fail("targets", "must be a list or null")
        mask = tuple(t is not None for t in raw_targets)
        targets = tuple(float(t) if t is not None else 0.0 for t in raw_targets)
    raw_gt = record.get("ground_truth")
    ground_truth = tuple(float(x) for x in raw_gt) if raw_gt is not None else None
    try:
        return Graph(
            node_labels=tuple(labels),
            edges=tuple(parsed_edges),
            ground_truth=ground_truth,
            targets=targets,
            target_mask=mask,
            smiles=record.get("smiles"),
        )
    except ValueError as exc:
        raise DatasetFormatError(f"line {line_no}: {exc}") from exc


def dumps_dataset(dataset: Dataset) -> str:
    """Serialize a Dataset to JSON-Lines text (deterministic bytes)."""
    header = {
        "task_names": list(dataset.task_names),
        "task_kinds": list(dataset.task_kinds),
        "provenance": dataset.provenance,
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    lines.extend(
        json.dumps(_graph_to_record(g), sort_keys=True, separators=(",", ":"))
        for g in dataset.graphs
    )
    return "\n".join(lines) + "\n"


def loads_dataset(text: str) -> Dataset:
    """Parse JSON-Lines text into a Dataset. Empty input gives an empty Dataset."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        return Dataset(graphs=())
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"line 1: invalid JSON: {exc}") from exc
    if not isinstance(header, dict) or "task_names" not in header or "task_kinds" not in header:
        raise DatasetFormatError("line 1: header must carry 'task_names' and 'task_kinds'")
    graphs = []
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"line {line_no}: invalid JSON: {exc}") from exc
        graphs.append(_record_to_graph(record, line_no))
    return Dataset(
        graphs=tuple(graphs),
        task_names=tuple(header["task_names"]),
        task_kinds=tuple(header["task_kinds"]),
        provenance=header.get("provenance", ""),
    )


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps_dataset(dataset), encoding="utf-8")


def load_dataset(path: str | Path) -> Dataset:
    return loads_dataset(Path(path).read_text(encoding="utf-8"))


def targets_matrix(graphs: Sequence[Graph], num_tasks: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack graph targets/masks into (n, num_tasks) arrays; missing rows are all-masked."""
    targets = np.zeros((len(graphs), num_tasks))
    mask = np.zeros((len(graphs), num_tasks), dtype=bool)
    for row, g in enumerate(graphs):
        if g.targets is None:
            continue
        targets[row] = g.targets
        mask[row] = g.target_mask if g.target_mask is not None else True
    return targets, mask
