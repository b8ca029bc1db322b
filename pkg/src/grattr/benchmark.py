"""Synthetic attribution benchmarks with exact ground truth, plus the trial
sweep over constraints x methods x seeds.

Three task families:

* ring_motif      - positives carry a planted 6-cycle of label-0 nodes,
                    negatives a label-0 path of 3-5 nodes (so counting
                    label-0 atoms is not enough); classify presence.
* triple_motif    - three fragment motifs; positive iff all three are
                    planted, negatives get a random strict subset.
* additive_score  - regression; the target is a sum of per-label
                    contributions and the ground truth is that table
                    evaluated per node.

Ground-truth masks cover exactly the planted nodes, so attribution quality
can be scored without any external reference data.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .attribution import METHODS, attribute
from .data import Dataset, targets_matrix
from .graphs import Graph, make_batch
from .metrics import UndefinedMetricError, auroc, pearson
from .model import ModelConfig, forward
from .regularizers import MODES, RegularizerConfig
from .training import TrainConfig, TrainingDivergedError, train

TASK_KINDS_BY_GENERATOR = {
    "ring_motif": "classification",
    "triple_motif": "classification",
    "additive_score": "regression",
}

DEFAULT_CONTRIBUTIONS = (1.0, -0.5, 0.2, -1.0)


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    num_graphs: int = 200
    # Mean pooling scales a motif's share of the graph encoding by 1/n, so a
    # narrow size band keeps class signal about the motif, not graph size.
    size_range: tuple[int, int] = (14, 20)
    alphabet_size: int = 4
    contribution_table: tuple[float, ...] | None = None
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.kind not in TASK_KINDS_BY_GENERATOR:
            raise ValueError(f"unknown task kind {self.kind!r}")
        lo, hi = self.size_range
        if lo > hi or lo < 2:
            raise ValueError(f"bad size_range {self.size_range}")
        if self.kind == "ring_motif" and lo < 8:
            raise ValueError("ring_motif requires size_range min >= 8")
        if self.kind == "triple_motif":
            if lo < 10:
                raise ValueError("triple_motif requires size_range min >= 10")
            if self.alphabet_size < 4:
                raise ValueError("triple_motif requires alphabet_size >= 4")
        if self.kind in ("ring_motif", "triple_motif") and self.num_graphs % 2 != 0:
            raise ValueError(f"{self.kind} requires an even num_graphs for exact class balance")
        if self.kind == "additive_score":
            table = self.contribution_table
            if table is None:
                if self.alphabet_size != len(DEFAULT_CONTRIBUTIONS):
                    raise ValueError(
                        "additive_score needs a contribution_table matching alphabet_size"
                    )
                table = DEFAULT_CONTRIBUTIONS
            if len(table) != self.alphabet_size:
                raise ValueError(
                    f"contribution_table length {len(table)} != alphabet_size {self.alphabet_size}"
                )
            object.__setattr__(self, "contribution_table", tuple(float(x) for x in table))
        if not self.name:
            object.__setattr__(self, "name", self.kind)


def _random_tree_edges(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def gen_ring_motif(spec: TaskSpec, rng: np.random.Generator | None = None) -> Dataset:
    """Classification: does the graph contain the planted label-0 6-cycle?

    Base graphs are random trees with uniform labels. Positives splice in a
    6-cycle of label-0 nodes attached by one edge; negatives splice in a
    label-0 path of 3-5 nodes instead. The planted cycle is the only cycle in
    a positive graph, and negatives are acyclic.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    lo, hi = spec.size_range
    graphs = []
    for idx in range(spec.num_graphs):
        positive = idx % 2 == 0
        n = int(rng.integers(lo, hi + 1))
        motif_size = 6 if positive else int(rng.integers(3, 6))
        tree_n = n - motif_size
        labels = [int(x) for x in rng.integers(0, spec.alphabet_size, size=tree_n)]
        edges = [(i, j, "single") for i, j in _random_tree_edges(tree_n, rng)]
        motif_nodes = list(range(tree_n, tree_n + motif_size))
        labels.extend([0] * motif_size)
        for k in range(motif_size - 1):
            edges.append((motif_nodes[k], motif_nodes[k + 1], "single"))
        if positive:
            edges.append((motif_nodes[0], motif_nodes[-1], "single"))
        attach_tree = int(rng.integers(0, tree_n))
        attach_motif = motif_nodes[int(rng.integers(0, motif_size))]
        edges.append((attach_tree, attach_motif, "single"))
        mask = [0.0] * tree_n + [1.0 if positive else 0.0] * motif_size
        graphs.append(Graph(
            node_labels=tuple(labels),
            edges=tuple(edges),
            ground_truth=tuple(mask) if positive else tuple([0.0] * n),
            targets=(1.0 if positive else 0.0,),
            target_mask=(True,),
        ))
    return Dataset(
        graphs=tuple(graphs),
        task_names=("ring_motif_present",),
        task_kinds=("classification",),
        provenance=f"gen_ring_motif(seed={spec.seed})",
    )


# The three fragments of the conjunction task. Each entry gives the planted
# node labels and the motif-internal edges; the first node is the attachment
# point. Labels 1, 2, 3 mark the fragments; label 0 marks the leaves of the
# third one.
_TRIPLE_MOTIFS = {
    1: ((1, 1, 1), ((0, 1), (1, 2), (0, 2))),        # triangle of label-1 nodes
    2: ((2, 2), ((0, 1),)),                            # bonded label-2 pair
    3: ((3, 0, 0), ((0, 1), (0, 2))),                  # label-3 hub with two label-0 leaves
}
_STRICT_SUBSETS = ((), (1,), (2,), (3,), (1, 2), (1, 3), (2, 3))


def _sanitize_triple_labels(labels: list[int], edges: list[tuple[int, int, str]],
                            mutable: set[int], forbidden: dict[int, set[int]],
                            alphabet_size: int, rng: np.random.Generator) -> None:
    """Resample mutable labels until no unplanned fragment pattern remains.

    Patterns broken up: an edge between two label-2 nodes, and a label-3 node
    with two or more label-0 neighbors. Only tree nodes are mutable; planted
    motif labels stay fixed.
    """
    neighbors: dict[int, list[int]] = {i: [] for i in range(len(labels))}
    for i, j, _ in edges:
        neighbors[i].append(j)
        neighbors[j].append(i)

    def resample(node: int, avoid: set[int]) -> None:
        choices = [c for c in range(alphabet_size)
                   if c not in avoid and c not in forbidden.get(node, ())]
        labels[node] = int(choices[int(rng.integers(0, len(choices)))])

    for _ in range(10_000):
        changed = False
        for i, j, _ in edges:
            if labels[i] == 2 and labels[j] == 2:
                victim = j if j in mutable else i
                if victim not in mutable:
                    continue  # planted pair, leave alone
                resample(victim, {2})
                changed = True
        for node in list(mutable):
            if labels[node] == 3:
                zero_neighbors = sum(1 for nb in neighbors[node] if labels[nb] == 0)
                if zero_neighbors >= 2:
                    resample(node, {3})
                    changed = True
        if not changed:
            return
    raise RuntimeError("label sanitation did not converge")


def gen_triple_motif(spec: TaskSpec, rng: np.random.Generator | None = None) -> Dataset:
    """Classification: are all three fragments present (logical AND)?

    Positives plant a label-1 triangle, a bonded label-2 pair, and a label-3
    hub with two label-0 leaves; negatives plant a random strict subset. Tree
    labels are resampled so no fragment ever appears by accident, keeping the
    planted-node mask an exact explanation.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    lo, hi = spec.size_range
    graphs = []
    for idx in range(spec.num_graphs):
        positive = idx % 2 == 0
        planted = (1, 2, 3) if positive else _STRICT_SUBSETS[int(rng.integers(0, 7))]
        planted_size = sum(len(_TRIPLE_MOTIFS[m][0]) for m in planted)
        n = int(rng.integers(lo, hi + 1))
        tree_n = max(n - planted_size, 2)
        labels = [int(x) for x in rng.integers(0, spec.alphabet_size, size=tree_n)]
        edges: list[tuple[int, int, str]] = [
            (i, j, "single") for i, j in _random_tree_edges(tree_n, rng)
        ]
        mutable = set(range(tree_n))
        forbidden: dict[int, set[int]] = {}
        planted_nodes: list[int] = []
        for motif in planted:
            motif_labels, motif_edges = _TRIPLE_MOTIFS[motif]
            base = len(labels)
            labels.extend(motif_labels)
            planted_nodes.extend(range(base, base + len(motif_labels)))
            for a, b in motif_edges:
                edges.append((base + a, base + b, "single"))
            attach = int(rng.integers(0, tree_n))
            edges.append((attach, base, "single"))
            if motif == 2:
                forbidden.setdefault(attach, set()).add(2)
            elif motif == 3:
                forbidden.setdefault(attach, set()).add(0)
        _sanitize_triple_labels(labels, edges, mutable, forbidden, spec.alphabet_size, rng)
        total = len(labels)
        mask = [0.0] * total
        if positive:
            for node in planted_nodes:
                mask[node] = 1.0
        graphs.append(Graph(
            node_labels=tuple(labels),
            edges=tuple(edges),
            ground_truth=tuple(mask),
            targets=(1.0 if positive else 0.0,),
            target_mask=(True,),
        ))
    return Dataset(
        graphs=tuple(graphs),
        task_names=("all_three_fragments",),
        task_kinds=("classification",),
        provenance=f"gen_triple_motif(seed={spec.seed})",
    )


def gen_additive(spec: TaskSpec, rng: np.random.Generator | None = None) -> Dataset:
    """Regression: the target is the sum of per-label contributions.

    ground_truth_i is the contribution of node i's label, so a perfect
    attribution reproduces the table. Graphs are random trees with a few
    extra edges for degree variety.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    lo, hi = spec.size_range
    table = spec.contribution_table
    graphs = []
    for _ in range(spec.num_graphs):
        n = int(rng.integers(lo, hi + 1))
        labels = [int(x) for x in rng.integers(0, spec.alphabet_size, size=n)]
        edge_set = {tuple(sorted(e)) for e in _random_tree_edges(n, rng)}
        for _ in range(int(rng.integers(0, n // 5 + 1))):
            i, j = int(rng.integers(0, n)), int(rng.integers(0, n))
            if i != j and (min(i, j), max(i, j)) not in edge_set:
                edge_set.add((min(i, j), max(i, j)))
        contributions = [table[label] for label in labels]
        graphs.append(Graph(
            node_labels=tuple(labels),
            edges=tuple((i, j, "single") for i, j in sorted(edge_set)),
            ground_truth=tuple(contributions),
            targets=(float(sum(contributions)),),
            target_mask=(True,),
        ))
    return Dataset(
        graphs=tuple(graphs),
        task_names=("additive_score",),
        task_kinds=("regression",),
        provenance=f"gen_additive(seed={spec.seed})",
    )


_GENERATORS = {
    "ring_motif": gen_ring_motif,
    "triple_motif": gen_triple_motif,
    "additive_score": gen_additive,
}


def generate_dataset(spec: TaskSpec) -> Dataset:
    """Generate the dataset described by a TaskSpec, seeded by spec.seed."""
    return _GENERATORS[spec.kind](spec)


def score_attribution(maps, graphs: Sequence[Graph], task_kind: str) -> float:
    """Average per-graph attribution quality against the ground truth.

    Classification: node-level AUROC of scores vs. the ground-truth mask,
    positive-class graphs only (all-zero masks are skipped; an all-ones mask
    is excluded with a warning). Regression: per-graph Pearson correlation of
    scores vs. the per-node contributions; constant inputs are excluded with
    a warning.
    """
    maps = list(maps)
    if len(maps) != len(graphs):
        raise ValueError("score_attribution needs exactly one map per scored graph")
    per_graph = []
    for amap, graph in zip(maps, graphs):
        if graph.ground_truth is None:
            raise ValueError("scored graphs must carry ground truth")
        truth = np.asarray(graph.ground_truth, dtype=np.float64)
        scores = np.asarray(amap.scores, dtype=np.float64)
        if task_kind == "classification":
            mask = truth != 0
            if not mask.any():
                continue  # negative-class graph, nothing to explain
            if mask.all():
                warnings.warn(
                    f"graph {amap.graph_ref}: constant ground-truth mask, excluded from scoring"
                )
                continue
            per_graph.append(auroc(scores, mask))
        else:
            if np.all(truth == truth[0]) or np.all(scores == scores[0]):
                warnings.warn(
                    f"graph {amap.graph_ref}: constant scores or ground truth, excluded from scoring"
                )
                continue
            per_graph.append(pearson(scores, truth))
    if not per_graph:
        raise UndefinedMetricError("no scorable graphs")
    return float(np.mean(per_graph))


@dataclass(frozen=True)
class TrialPlan:
    tasks: tuple[TaskSpec, ...]
    constraints: tuple[str, ...] = ("none", "bro", "gini", "both")
    methods: tuple[str, ...] = ("cam", "toprep", "gradcam_last", "gradcam_all", "random")
    seeds: tuple[int, ...] = tuple(range(10))
    model_cfg: ModelConfig | None = None
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    reg_cfg: RegularizerConfig = field(default_factory=RegularizerConfig)
    test_fraction: float = 0.2

    def __post_init__(self):
        if not (self.tasks and self.constraints and self.methods and self.seeds):
            raise ValueError("every TrialPlan axis must be non-empty")
        for c in self.constraints:
            if c not in MODES:
                raise ValueError(f"unknown constraint {c!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown attribution method {m!r}")
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValueError("task names must be unique within a plan")


@dataclass(frozen=True)
class TrialResult:
    task: str
    constraint: str
    seed: int
    model_metric: float
    attr_metrics: dict[str, float]
    failed: bool = False
    error: str = ""

    def sort_key(self):
        return (self.task, self.constraint, self.seed)


def _split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, 0xA5])
    order = rng.permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    return order[n_test:], order[:n_test]


def _model_metric(predictions: np.ndarray, targets: np.ndarray, mask: np.ndarray,
                  task_kinds: Sequence[str]) -> float:
    per_task = []
    for j, kind in enumerate(task_kinds):
        observed = mask[:, j]
        if not observed.any():
            continue
        scores = predictions[observed, j]
        truth = targets[observed, j]
        if kind == "classification":
            per_task.append(auroc(scores, truth != 0))
        else:
            per_task.append(pearson(scores, truth))
    if not per_task:
        raise UndefinedMetricError("no observed targets in the test split")
    return float(np.mean(per_task))


def run_trial(plan: TrialPlan, task_spec: TaskSpec, constraint: str, seed: int) -> TrialResult:
    """One (task, constraint, seed) cell: generate, split 80/20, train, score."""
    dataset = generate_dataset(task_spec)
    template = plan.model_cfg or ModelConfig(num_tasks=1, alphabet_size=task_spec.alphabet_size)
    model_cfg = replace(template, num_tasks=dataset.num_tasks,
                        alphabet_size=task_spec.alphabet_size, seed=seed)
    train_cfg = replace(plan.train_cfg, seed=seed)
    reg_cfg = replace(plan.reg_cfg, mode=constraint)
    train_idx, test_idx = _split_indices(len(dataset), plan.test_fraction, seed)
    train_graphs = tuple(dataset.graphs[i] for i in train_idx)
    test_graphs = tuple(dataset.graphs[i] for i in test_idx)
    train_set = Dataset(train_graphs, dataset.task_names, dataset.task_kinds,
                        dataset.provenance)
    try:
        params, _ = train(train_set, model_cfg, train_cfg, reg_cfg)
        test_batch = make_batch(test_graphs, model_cfg.alphabet_size, model_cfg.max_degree)
        logits = forward(params, test_batch, config=model_cfg).predictions.data
        targets, mask = targets_matrix(test_graphs, dataset.num_tasks)
        model_metric = _model_metric(logits, targets, mask, dataset.task_kinds)

        task_kind = dataset.task_kinds[0]
        if task_kind == "classification":
            scored = tuple(g for g in test_graphs
                           if g.targets is not None and g.targets[0] != 0)
        else:
            scored = test_graphs
        attr_metrics = {}
        for method in plan.methods:
            rng = np.random.default_rng([seed, 0x7A])
            maps = [
                attribute(params, model_cfg, g, method, task_index=0, rng=rng, graph_ref=i)
                for i, g in enumerate(scored)
            ]
            attr_metrics[method] = score_attribution(maps, scored, task_kind)
    except (TrainingDivergedError, UndefinedMetricError) as exc:
        return TrialResult(task_spec.name, constraint, seed, float("nan"), {},
                           failed=True, error=str(exc))
    return TrialResult(task_spec.name, constraint, seed, model_metric, attr_metrics)


def _trial_job(args) -> TrialResult:
    plan, task_index, constraint, seed = args
    return run_trial(plan, plan.tasks[task_index], constraint, seed)


def resolve_workers(requested: int | None, num_jobs: int) -> int:
    """Worker count: requested or cpu count, capped by GRATTR_THREADS and num_jobs."""
    workers = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("GRATTR_THREADS")
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, min(workers, num_jobs))


def run_trials(plan: TrialPlan, workers: int | None = None
               ) -> tuple[list[TrialResult], dict]:
    """Run the full sweep; deterministic regardless of worker scheduling.

    Returns results sorted by (task, constraint, seed) and a summary with
    mean/std/quartiles per combination. Diverged trials are kept in the
    result list (flagged failed) but excluded from summary statistics.
    """
    jobs = [
        (plan, ti, constraint, seed)
        for ti in range(len(plan.tasks))
        for constraint in plan.constraints
        for seed in plan.seeds
    ]
    n_workers = resolve_workers(workers, len(jobs))
    if n_workers == 1:
        results = [_trial_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_trial_job, jobs))
    results.sort(key=TrialResult.sort_key)
    return results, summarize(results, plan.methods)


def _stats(values: Sequence[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    q1, median, q3 = (quantile(arr, q) for q in (0.25, 0.5, 0.75))
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "q1": q1,
        "median": median,
        "q3": q3,
    }


def quantile(values, q: float) -> float:
    """Linear-interpolation quantile at position q * (n - 1) of the sorted values."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("quantile of empty sequence")
    pos = q * (arr.size - 1)
    low = int(np.floor(pos))
    high = int(np.ceil(pos))
    frac = pos - low
    return float(arr[low] * (1.0 - frac) + arr[high] * frac)


def summarize(results: Sequence[TrialResult], methods: Sequence[str]) -> dict:
    """Per-(task, constraint) descriptive statistics over successful trials."""
    combos: dict[tuple[str, str], list[TrialResult]] = {}
    for r in results:
        combos.setdefault((r.task, r.constraint), []).append(r)
    summary = {"combinations": []}
    for (task, constraint) in sorted(combos):
        rows = combos[(task, constraint)]
        ok = [r for r in rows if not r.failed]
        entry = {
            "task": task,
            "constraint": constraint,
            "trials": len(rows),
            "failed": len(rows) - len(ok),
        }
        if ok:
            entry["model_metric"] = _stats([r.model_metric for r in ok])
            entry["methods"] = {
                method: _stats([r.attr_metrics[method] for r in ok])
                for method in methods
            }
        summary["combinations"].append(entry)
    return summary
