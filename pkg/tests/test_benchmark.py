import numpy as np
import pytest

from grattr.attribution import AttributionMap
from grattr.benchmark import (TaskSpec, TrialPlan, gen_additive, gen_ring_motif,
                              gen_triple_motif, generate_dataset, quantile,
                              resolve_workers, run_trials, score_attribution, summarize)
from grattr.data import dumps_dataset
from grattr.metrics import UndefinedMetricError
from grattr.model import ModelConfig
from grattr.training import TrainConfig

from helpers import brute_force_auroc, brute_force_pearson, brute_force_quantile

RING = TaskSpec(kind="ring_motif", num_graphs=60, size_range=(14, 20), seed=0)
TRIPLE = TaskSpec(kind="triple_motif", num_graphs=60, size_range=(14, 20), seed=1)
ADDITIVE = TaskSpec(kind="additive_score", num_graphs=40, size_range=(8, 16), seed=2)


def _adjacency_sets(graph):
    neighbors = {i: set() for i in range(graph.num_nodes)}
    for i, j, _ in graph.edges:
        neighbors[i].add(j)
        neighbors[j].add(i)
    return neighbors


def test_ring_positives_have_exactly_one_cycle_of_label_zero():
    dataset = gen_ring_motif(RING)
    for g in dataset.graphs:
        positive = g.targets[0] != 0
        independent_cycles = len(g.edges) - g.num_nodes + 1  # connected by construction
        if positive:
            assert independent_cycles == 1
            planted = [i for i, v in enumerate(g.ground_truth) if v != 0]
            assert len(planted) == 6
            assert all(g.node_labels[i] == 0 for i in planted)
            # the planted nodes induce the 6-cycle: each has 2 planted neighbors
            neighbors = _adjacency_sets(g)
            for node in planted:
                assert len(neighbors[node] & set(planted)) == 2
        else:
            assert independent_cycles == 0
            assert all(v == 0 for v in g.ground_truth)


def test_ring_class_balance_and_mask_sums():
    dataset = gen_ring_motif(RING)
    labels = [g.targets[0] for g in dataset.graphs]
    assert sum(labels) == RING.num_graphs / 2
    for g in dataset.graphs:
        assert sum(g.ground_truth) == (6.0 if g.targets[0] else 0.0)


def test_generated_datasets_are_reproducible():
    assert dumps_dataset(gen_ring_motif(RING)) == dumps_dataset(generate_dataset(RING))
    other = gen_ring_motif(TaskSpec(kind="ring_motif", num_graphs=60,
                                    size_range=(14, 20), seed=123))
    assert dumps_dataset(other) != dumps_dataset(gen_ring_motif(RING))


def _detect_triangle_of_ones(graph):
    neighbors = _adjacency_sets(graph)
    ones = [i for i, lab in enumerate(graph.node_labels) if lab == 1]
    for a in ones:
        for b in neighbors[a]:
            if graph.node_labels[b] != 1 or b <= a:
                continue
            if any(graph.node_labels[c] == 1 and c > b for c in neighbors[a] & neighbors[b]):
                return True
    return False


def _detect_two_two_edge(graph):
    return any(graph.node_labels[i] == 2 and graph.node_labels[j] == 2
               for i, j, _ in graph.edges)


def _detect_zero_fed_three(graph):
    neighbors = _adjacency_sets(graph)
    for node, lab in enumerate(graph.node_labels):
        if lab == 3:
            zeros = sum(1 for nb in neighbors[node] if graph.node_labels[nb] == 0)
            if zeros >= 2:
                return True
    return False


def test_triple_motif_positives_and_negatives_by_independent_detectors():
    dataset = gen_triple_motif(TRIPLE)
    pos_hist = np.zeros(4)
    neg_hist = np.zeros(4)
    for g in dataset.graphs:
        present = (_detect_triangle_of_ones(g), _detect_two_two_edge(g),
                   _detect_zero_fed_three(g))
        if g.targets[0] != 0:
            assert all(present)
            planted = sum(1 for v in g.ground_truth if v != 0)
            assert planted >= 6
            for lab in g.node_labels:
                pos_hist[lab] += 1
        else:
            assert not all(present)
            for lab in g.node_labels:
                neg_hist[lab] += 1
    # positives always carry the planted fragment labels; histograms must differ
    pos_hist /= pos_hist.sum()
    neg_hist /= neg_hist.sum()
    assert np.abs(pos_hist - neg_hist).max() > 0.01


def test_triple_motif_balance():
    dataset = gen_triple_motif(TRIPLE)
    assert sum(g.targets[0] for g in dataset.graphs) == TRIPLE.num_graphs / 2


def test_additive_targets_are_contribution_sums():
    dataset = gen_additive(ADDITIVE)
    table = ADDITIVE.contribution_table or (1.0, -0.5, 0.2, -1.0)
    for g in dataset.graphs:
        expected = sum(table[lab] for lab in g.node_labels)
        assert g.targets[0] == pytest.approx(expected, abs=1e-12)
        assert g.ground_truth == tuple(table[lab] for lab in g.node_labels)


def test_additive_single_node_table_lookup():
    spec = TaskSpec(kind="additive_score", num_graphs=4, size_range=(1, 1), seed=3)
    dataset = gen_additive(spec)
    for g in dataset.graphs:
        assert g.num_nodes == 1
        assert g.targets[0] == spec.contribution_table[g.node_labels[0]]


def test_task_spec_validation():
    with pytest.raises(ValueError, match="even"):
        TaskSpec(kind="ring_motif", num_graphs=11)
    with pytest.raises(ValueError, match="min >= 8"):
        TaskSpec(kind="ring_motif", size_range=(6, 10))
    with pytest.raises(ValueError, match="min >= 10"):
        TaskSpec(kind="triple_motif", size_range=(8, 12))
    with pytest.raises(ValueError, match="alphabet_size >= 4"):
        TaskSpec(kind="triple_motif", alphabet_size=3)
    with pytest.raises(ValueError, match="contribution_table"):
        TaskSpec(kind="additive_score", alphabet_size=5)
    with pytest.raises(ValueError, match="unknown task kind"):
        TaskSpec(kind="clique")


def _mask_map(mask):
    return AttributionMap("cam", 0, tuple(float(v) for v in mask))


def test_score_attribution_perfect_and_inverted():
    dataset = gen_ring_motif(TaskSpec(kind="ring_motif", num_graphs=20,
                                      size_range=(14, 16), seed=4))
    positives = [g for g in dataset.graphs if g.targets[0] != 0]
    perfect = [_mask_map(g.ground_truth) for g in positives]
    assert score_attribution(perfect, positives, "classification") == 1.0
    inverted = [_mask_map([-v for v in g.ground_truth]) for g in positives]
    assert score_attribution(inverted, positives, "classification") == 0.0


def test_score_attribution_regression_sign():
    dataset = gen_additive(TaskSpec(kind="additive_score", num_graphs=10,
                                    size_range=(6, 10), seed=5))
    perfect = [_mask_map(g.ground_truth) for g in dataset.graphs]
    assert score_attribution(perfect, dataset.graphs, "regression") == pytest.approx(1.0)
    inverted = [_mask_map([-v for v in g.ground_truth]) for g in dataset.graphs]
    assert score_attribution(inverted, dataset.graphs, "regression") == pytest.approx(-1.0)


def test_score_attribution_skips_negatives_silently_and_warns_on_all_ones():
    from grattr.graphs import Graph
    positive = Graph((0, 0, 0), ((0, 1, "single"), (1, 2, "single")),
                     ground_truth=(1.0, 0.0, 0.0), targets=(1.0,))
    negative = Graph((0, 0), ((0, 1, "single"),), ground_truth=(0.0, 0.0), targets=(0.0,))
    all_ones = Graph((0, 0), ((0, 1, "single"),), ground_truth=(1.0, 1.0), targets=(1.0,))
    maps = [AttributionMap("cam", 0, (1.0, 0.0, 0.0)),
            AttributionMap("cam", 0, (0.3, 0.4)),
            AttributionMap("cam", 0, (0.3, 0.4))]
    with pytest.warns(UserWarning, match="constant ground-truth mask"):
        value = score_attribution(maps, [positive, negative, all_ones], "classification")
    assert value == 1.0
    with pytest.raises(UndefinedMetricError):
        score_attribution([maps[1]], [negative], "classification")


@pytest.mark.parametrize("seed", range(100))
def test_score_attribution_matches_brute_force_oracle(seed):
    rng = np.random.default_rng(seed)
    kind = "classification" if seed % 2 == 0 else "regression"
    graphs, maps, oracle_values = [], [], []
    from grattr.graphs import Graph
    for _ in range(rng.integers(1, 5)):
        n = int(rng.integers(3, 9))
        edges = tuple((int(rng.integers(0, i)), i, "single") for i in range(1, n))
        scores = rng.normal(size=n)
        if kind == "classification":
            mask = rng.integers(0, 2, size=n)
            if mask.min() == mask.max():
                mask[0] = 1 - mask[0]
            graphs.append(Graph((0,) * n, edges, ground_truth=tuple(float(v) for v in mask),
                                targets=(1.0,)))
            oracle_values.append(brute_force_auroc(scores, mask))
        else:
            truth = rng.normal(size=n)
            graphs.append(Graph((0,) * n, edges, ground_truth=tuple(truth), targets=(1.0,)))
            oracle_values.append(brute_force_pearson(scores, truth))
        maps.append(AttributionMap("cam", 0, tuple(scores)))
    got = score_attribution(maps, graphs, kind)
    assert got == pytest.approx(float(np.mean(oracle_values)), abs=1e-12)


@pytest.mark.parametrize("seed", range(30))
def test_quantiles_match_naive_sort_oracle(seed):
    rng = np.random.default_rng(seed)
    values = rng.choice([0.1, 0.2, 0.5, 0.9, 1.7], size=rng.integers(1, 12))
    for q in (0.25, 0.5, 0.75):
        assert quantile(values, q) == brute_force_quantile(values, q)


def _tiny_plan(seeds=(0, 1)):
    return TrialPlan(
        tasks=(TaskSpec(kind="ring_motif", num_graphs=16, size_range=(14, 15), seed=0),),
        constraints=("none", "gini"),
        methods=("cam", "random"),
        seeds=seeds,
        model_cfg=ModelConfig(num_tasks=1, alphabet_size=4, hidden_dim=8),
        train_cfg=TrainConfig(epochs=2, batch_size=8),
    )


def test_run_trials_produces_one_result_per_cell():
    results, summary = run_trials(_tiny_plan(), workers=1)
    assert len(results) == 4
    assert [(r.constraint, r.seed) for r in results] == [
        ("gini", 0), ("gini", 1), ("none", 0), ("none", 1)]
    for r in results:
        assert not r.failed
        assert set(r.attr_metrics) == {"cam", "random"}
        assert 0.0 <= r.model_metric <= 1.0
    combos = summary["combinations"]
    assert len(combos) == 2
    assert all(c["trials"] == 2 and c["failed"] == 0 for c in combos)


def test_run_trials_rerun_is_identical():
    from grattr.cli import emit_csv
    results_a, _ = run_trials(_tiny_plan(), workers=1)
    results_b, _ = run_trials(_tiny_plan(), workers=1)

    import os, tempfile

    def csv_bytes(results):
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "r.csv")
            emit_csv(results, path)
            with open(path, "rb") as handle:
                return handle.read()

    assert csv_bytes(results_a) == csv_bytes(results_b)


def test_summarize_excludes_failed_trials():
    from grattr.benchmark import TrialResult
    ok = TrialResult("t", "none", 0, 0.9, {"cam": 0.8})
    bad = TrialResult("t", "none", 1, float("nan"), {}, failed=True, error="boom")
    summary = summarize([ok, bad], ("cam",))
    combo = summary["combinations"][0]
    assert combo["trials"] == 2 and combo["failed"] == 1
    assert combo["model_metric"]["mean"] == pytest.approx(0.9)


def test_resolve_workers_respects_env_cap(monkeypatch):
    monkeypatch.setenv("GRATTR_THREADS", "2")
    assert resolve_workers(8, 100) == 2
    assert resolve_workers(1, 100) == 1
    monkeypatch.delenv("GRATTR_THREADS")
    assert resolve_workers(3, 2) == 2


def test_plan_validation():
    with pytest.raises(ValueError, match="non-empty"):
        TrialPlan(tasks=(), seeds=(1,))
    with pytest.raises(ValueError, match="constraint"):
        TrialPlan(tasks=(RING,), constraints=("l2",))
    with pytest.raises(ValueError, match="method"):
        TrialPlan(tasks=(RING,), methods=("saliency",))
    with pytest.raises(ValueError, match="unique"):
        TrialPlan(tasks=(RING, RING))
