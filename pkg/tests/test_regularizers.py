import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grattr import autodiff as ad
from grattr.model import ForwardArtifacts
from grattr.regularizers import (RegularizerConfig, bro_loss, bro_value, gini_mean,
                                 gini_row, gini_value, total_loss)

from helpers import brute_force_gini, tiny_classification_setup, model_grad_max_rel_err


def _bro(h, offsets, lam):
    tape = ad.Tape()
    return bro_loss(tape.tensor(h, requires_grad=True), offsets, lam).value


def test_bro_zero_for_orthonormal_rows():
    h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert _bro(h, (0, 2), 0.001) < 1e-10


def test_bro_single_graph_hand_value():
    # HH^T - I = [[0,1],[1,0]], Frobenius sqrt(2), times lam/2
    h = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert _bro(h, (0, 2), 0.001) == pytest.approx(0.001 / 2 * np.sqrt(2), rel=1e-12)


def test_bro_single_zero_row():
    assert _bro(np.zeros((1, 3)), (0, 1), 2.0) == pytest.approx(1.0, rel=1e-12)


def test_bro_is_batch_mean():
    h = np.vstack([np.array([[1.0, 0.0], [1.0, 0.0]]), np.zeros((1, 2))])
    lone = _bro(h[:2], (0, 2), 2.0)
    zero_row = _bro(h[2:], (0, 1), 2.0)
    assert _bro(h, (0, 2, 3), 2.0) == pytest.approx((lone + zero_row) / 2, rel=1e-12)


def test_bro_value_twin_matches_tensor_path():
    rng = np.random.default_rng(8)
    h = rng.normal(size=(7, 4))
    offsets = (0, 3, 7)
    assert bro_value(h, offsets, 0.37) == pytest.approx(_bro(h, offsets, 0.37), rel=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_bro_nonnegative_and_invariant_under_orthogonal_rotation(seed):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(5, 5))
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    base = _bro(h, (0, 5), 1.0)
    rotated = _bro(h @ q, (0, 5), 1.0)
    assert base >= 0.0
    assert abs(base - rotated) < 1e-10


def test_bro_zero_iff_orthonormal():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    assert _bro(q[:3], (0, 3), 1.0) < 1e-10          # orthonormal rows -> 0
    assert _bro(q[:3] * 2.0, (0, 3), 1.0) > 1e-3     # scaled rows -> positive


def _gini(values):
    tape = ad.Tape()
    return gini_row(tape.tensor(np.asarray(values, dtype=float).reshape(1, -1),
                                requires_grad=True)).value


def test_gini_constant_row_is_exactly_zero():
    assert _gini([2.5, 2.5, 2.5]) == 0.0


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_gini_one_hot_row_is_exactly_one(n):
    row = [0.0] * n
    row[-1] = 3.0
    assert _gini(row) == 1.0


def test_gini_half_sparse_example():
    assert _gini([1.0, 1.0, 0.0, 0.0]) == pytest.approx(2 / 3, abs=1e-12)
    assert _gini([1.0, 1.0, 0.0, 0.0]) == pytest.approx(
        brute_force_gini([1.0, 1.0, 0.0, 0.0]), abs=1e-15)


def test_gini_uses_absolute_values():
    assert _gini([-1.0, 1.0, 0.0, 0.0]) == _gini([1.0, 1.0, 0.0, 0.0])


def test_gini_zero_row_convention():
    assert _gini([0.0, 0.0, 0.0]) == 0.0


def test_gini_rejects_short_rows():
    with pytest.raises(ValueError, match=">= 2"):
        _gini([1.0])


def test_gini_matches_brute_force_on_random_rows():
    rng = np.random.default_rng(0)
    for _ in range(200):
        row = rng.normal(size=rng.integers(2, 9))
        assert _gini(row) == pytest.approx(brute_force_gini(row), abs=1e-12)


def test_gini_bounds_over_many_random_vectors():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        row = rng.normal(size=n) * rng.choice([0.0, 0.1, 1.0, 100.0], size=n)
        value = _gini(row)
        assert 0.0 <= value <= 1.0 + 1e-15


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=10),
       st.floats(1e-6, 1e6).map(lambda c: c) | st.floats(-1e6, -1e-6))
@settings(max_examples=200, deadline=None)
def test_gini_scale_invariance(row, c):
    base = _gini(row)
    scaled = _gini([c * x for x in row])
    assert scaled == pytest.approx(base, abs=1e-12)


def test_gini_mean_examples():
    tape = ad.Tape()
    single = gini_mean(tape.tensor([[1.0, 1.0, 0.0, 0.0]]))
    assert single.value == pytest.approx(2 / 3, abs=1e-12)
    tape = ad.Tape()
    two = gini_mean(tape.tensor([[1.0, 0.0], [1.0, 1.0]]))  # one-hot + uniform
    assert two.value == pytest.approx(0.5, abs=1e-12)
    tape = ad.Tape()
    assert gini_mean(tape.tensor(np.eye(4))).value == pytest.approx(1.0, abs=1e-12)


def test_gini_value_twin_matches_tensor_path():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(3, 6))
    tape = ad.Tape()
    assert gini_value(w) == pytest.approx(gini_mean(tape.constant(w)).value, abs=1e-15)


def _artifacts_for(tape, weights, h, offsets):
    w_t = tape.tensor(weights, requires_grad=True)
    h_t = tape.tensor(h, requires_grad=True)
    return ForwardArtifacts(
        per_layer_embeddings=[h_t], final_embeddings=h_t, pooled=h_t,
        predictions=h_t, param_tensors={"output_weights": w_t},
        node_offsets=offsets, tape=tape,
    )


def test_total_loss_mode_none_returns_task_loss_unchanged():
    tape = ad.Tape()
    task = tape.tensor([[0.37]], requires_grad=True)
    artifacts = _artifacts_for(tape, np.ones((1, 4)), np.ones((2, 2)), (0, 2))
    assert total_loss(task, artifacts, RegularizerConfig(mode="none")) is task


def test_total_loss_gini_division_is_identity_at_g_one():
    tape = ad.Tape()
    task = tape.tensor([[0.37]], requires_grad=True)
    artifacts = _artifacts_for(tape, np.array([[1.0, 0.0, 0.0]]), np.ones((2, 2)), (0, 2))
    out = total_loss(task, artifacts, RegularizerConfig(mode="gini"))
    assert out.value == pytest.approx(0.37, rel=1e-12)


def test_total_loss_gini_division_example():
    tape = ad.Tape()
    task = tape.tensor([[0.1]], requires_grad=True)
    # rows (one-hot, uniform) -> g = 0.5; 0.1 / 0.5^5 = 3.2
    artifacts = _artifacts_for(tape, np.array([[1.0, 0.0], [1.0, 1.0]]),
                               np.ones((2, 2)), (0, 2))
    out = total_loss(task, artifacts, RegularizerConfig(mode="gini", m=5.0))
    assert out.value == pytest.approx(3.2, rel=1e-12)


def test_total_loss_g_floor_clamps():
    tape = ad.Tape()
    task = tape.tensor([[1.0]], requires_grad=True)
    artifacts = _artifacts_for(tape, np.full((1, 4), 2.0), np.ones((2, 2)), (0, 2))
    out = total_loss(task, artifacts, RegularizerConfig(mode="gini", m=2.0, g_floor=1e-3))
    assert out.value == pytest.approx(1.0 / (1e-3) ** 2, rel=1e-12)


def test_total_loss_both_adds_bro_after_division():
    tape = ad.Tape()
    task = tape.tensor([[0.1]], requires_grad=True)
    h = np.array([[1.0, 0.0], [1.0, 0.0]])
    artifacts = _artifacts_for(tape, np.array([[1.0, 0.0], [1.0, 1.0]]), h, (0, 2))
    cfg = RegularizerConfig(mode="both", lam=0.001, m=5.0)
    expected = 3.2 + 0.001 / 2 * np.sqrt(2)
    assert total_loss(task, artifacts, cfg).value == pytest.approx(expected, rel=1e-12)


def test_gradients_flow_through_g():
    tape = ad.Tape()
    task = tape.tensor([[0.1]], requires_grad=True)
    artifacts = _artifacts_for(tape, np.array([[0.9, 0.2, 0.05]]), np.ones((2, 2)), (0, 2))
    out = total_loss(task, artifacts, RegularizerConfig(mode="gini"))
    grads = ad.backward(out)
    w_grad = grads[artifacts.param_tensors["output_weights"].node_id]
    assert np.abs(w_grad).max() > 0.0


@pytest.mark.parametrize("mode", ["bro", "gini", "both"])
def test_total_loss_gradcheck_on_tiny_model(mode):
    dataset, cfg, params, batch = tiny_classification_setup(seed=6)
    err = model_grad_max_rel_err(cfg, params, batch, dataset,
                                 RegularizerConfig(mode=mode, lam=0.5, m=3.0))
    assert err < 1e-4


def test_config_validation():
    with pytest.raises(ValueError, match="mode"):
        RegularizerConfig(mode="ridge")
    with pytest.raises(ValueError):
        RegularizerConfig(lam=-1.0)
