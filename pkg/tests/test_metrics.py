import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mrsfit.errors import ValidationError
from mrsfit.metrics import (
    aggregate,
    l1_objective,
    mae,
    mosae,
    optimal_scale,
    regression_stats,
)

amp_lists = st.lists(st.floats(0.0, 50.0), min_size=3, max_size=12)


def test_mae_examples():
    assert mae([1.0, 2.0, 5.0], [1.0, 2.0, 5.0], mm_index=2) == 0.0
    assert mae([2.0, 4.0, 9.0], [1.0, 2.0, 7.0], mm_index=2) == pytest.approx(1.5)
    # errors on the MM entry alone do not count
    assert mae([1.0, 2.0, 99.0], [1.0, 2.0, 5.0], mm_index=2) == 0.0


def test_optimal_scale_examples():
    assert optimal_scale([1.0, 2.0, 3.0, 9.0], [1.0, 2.0, 3.0, 1.0], mm_index=3) == 1.0
    assert optimal_scale([2.0, 4.0, 6.0, 9.0], [1.0, 2.0, 3.0, 1.0], mm_index=3) == 0.5


def test_optimal_scale_matches_grid_search():
    pred = np.array([2.0, 2.0, 2.0, 0.0])
    true = np.array([1.0, 2.0, 3.0, 0.0])
    w = optimal_scale(pred, true, mm_index=3)
    grid = np.arange(0.0, 3.0 + 1e-9, 1e-4)
    objectives = [l1_objective(g, pred[:3], true[:3]) for g in grid]
    best = grid[int(np.argmin(objectives))]
    assert w == pytest.approx(1.0)
    assert l1_objective(w, pred[:3], true[:3]) == pytest.approx(2.0)
    assert l1_objective(w, pred[:3], true[:3]) <= min(objectives) + 1e-9


def test_optimal_scale_all_zero_predictions_rejected():
    with pytest.raises(ValidationError):
        optimal_scale([0.0, 0.0, 1.0], [1.0, 2.0, 3.0], mm_index=2)


def test_mosae_examples():
    true = np.array([1.0, 2.0, 3.0, 7.0])
    for c in (0.1, 1.0, 7.0):
        assert mosae(c * true, true, mm_index=3) == pytest.approx(0.0, abs=1e-12)
    assert mosae([2.0, 2.0, 2.0, 5.0], true, mm_index=3) == pytest.approx(0.5)


def test_mosae_normalization_flag():
    true = np.array([1.0, 2.0, 3.0, 7.0])
    pred = np.array([2.0, 2.0, 2.0, 5.0])
    assert mosae(pred, true, 3, normalization="M-1") == pytest.approx(2.0 / 3.0)
    with pytest.raises(ValidationError):
        mosae(pred, true, 3, normalization="bogus")


@settings(max_examples=60, deadline=None)
@given(amp_lists, amp_lists)
def test_optimal_scale_beats_grid(pred, true):
    n = min(len(pred), len(true))
    pred, true = np.asarray(pred[:n]) + 0.01, np.asarray(true[:n])
    w = optimal_scale(pred, true, mm_index=n - 1)
    hi = max(3.0, float(np.max(true[:-1] / pred[:-1])) * 1.1) if n > 1 else 3.0
    grid = np.linspace(0.0, hi, 3001)
    best = min(l1_objective(g, pred[:-1], true[:-1]) for g in grid)
    assert l1_objective(w, pred[:-1], true[:-1]) <= best * (1 + 1e-9) + 1e-12


@settings(max_examples=100)
@given(amp_lists, st.floats(0.01, 100.0))
def test_mosae_is_scale_invariant(true, c):
    true = np.asarray(true)
    rng = np.random.default_rng(0)
    pred = true + rng.uniform(0.1, 1.0, true.size)
    a = mosae(pred, true, mm_index=true.size - 1)
    b = mosae(c * pred, true, mm_index=true.size - 1)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


def test_metrics_are_permutation_equivariant():
    rng = np.random.default_rng(1)
    pred = rng.uniform(0.5, 5.0, 8)
    true = rng.uniform(0.5, 5.0, 8)
    perm = rng.permutation(7)  # keep the MM entry last
    pred2 = np.concatenate([pred[:7][perm], pred[7:]])
    true2 = np.concatenate([true[:7][perm], true[7:]])
    assert mae(pred2, true2, 7) == pytest.approx(mae(pred, true, 7), rel=1e-12)
    assert mosae(pred2, true2, 7) == pytest.approx(mosae(pred, true, 7), rel=1e-12)


@settings(max_examples=100)
@given(amp_lists)
def test_mosae_bounded_by_unscaled_error(true):
    true = np.asarray(true)
    rng = np.random.default_rng(2)
    pred = np.abs(true + rng.uniform(0.05, 2.0, true.size))
    m = true.size
    bound = mae(pred, true, m - 1) * (m - 1) / m
    assert mosae(pred, true, m - 1) <= bound + 1e-12


def test_regression_examples():
    pred = np.array([0.0, 1.0, 2.0, 3.0])
    stats = regression_stats(np.c_[pred, 2 * pred + 1])
    assert stats.alpha == pytest.approx(2.0)
    assert stats.beta == pytest.approx(1.0)
    assert stats.r2 == pytest.approx(1.0)

    identical = regression_stats(np.c_[pred, pred])
    assert identical.alpha == pytest.approx(1.0)
    assert identical.beta == pytest.approx(0.0, abs=1e-12)
    assert identical.rmse == 0.0


def test_regression_matches_normal_equations():
    pts = np.array([[0.5, 1.1], [1.0, 2.3], [2.0, 3.9], [3.5, 8.1], [4.0, 7.7]])
    stats = regression_stats(pts)
    # independent oracle: solve [n, Sx; Sx, Sxx] [b; a] = [Sy; Sxy]
    x, y = pts[:, 0], pts[:, 1]
    a_mat = np.array([[len(x), x.sum()], [x.sum(), (x * x).sum()]])
    beta, alpha = np.linalg.solve(a_mat, np.array([y.sum(), (x * y).sum()]))
    assert stats.alpha == pytest.approx(alpha, rel=1e-12)
    assert stats.beta == pytest.approx(beta, rel=1e-12)
    assert stats.rmse == pytest.approx(float(np.sqrt(np.mean((x - y) ** 2))), rel=1e-12)
    assert stats.r2 <= 1.0


def test_regression_degenerate_inputs_rejected():
    with pytest.raises(ValidationError):
        regression_stats([(1.0, 2.0)])
    with pytest.raises(ValidationError):
        regression_stats([(1.0, 2.0), (1.0, 3.0)])


def test_aggregate_examples():
    one = aggregate([4.2])
    assert (one.mean, one.standard_error, one.n) == (4.2, 0.0, 1)
    three = aggregate([1.0, 2.0, 3.0])
    assert three.mean == pytest.approx(2.0)
    assert three.standard_error == pytest.approx(1.0 / np.sqrt(3.0))
    assert aggregate([5.0, 5.0, 5.0]).standard_error == 0.0
    with pytest.raises(ValidationError):
        aggregate([])
