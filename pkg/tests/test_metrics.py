import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskrnn import metrics as M

from oracles import oracle_f


def _square(y, x, s=10, shape=(40, 40)):
    m = np.zeros(shape, bool)
    m[y : y + s, x : x + s] = True
    return m


def test_iou_examples():
    a = _square(5, 5)
    assert M.iou(a, a) == 1.0
    assert M.iou(a, _square(25, 25)) == 0.0
    assert M.iou(a, _square(10, 5)) == 50 / 150
    assert M.iou(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0
    assert M.iou(np.zeros((3, 3)), np.ones((3, 3))) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_iou_symmetric_and_monotone(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((12, 12)) > 0.5, rng.random((12, 12)) > 0.5
    assert M.iou(a, b) == M.iou(b, a)
    # adding a correctly predicted pixel never hurts
    missed = np.argwhere(b & ~a)
    if len(missed):
        a2 = a.copy()
        a2[tuple(missed[0])] = True
        assert M.iou(a2, b) >= M.iou(a, b)


def test_f_examples():
    a = _square(5, 5)
    assert M.f_measure(a, a) == (1.0, 1.0, 1.0)
    assert M.f_measure(np.zeros_like(a), a)[2] == 0.0
    assert M.f_measure(np.zeros_like(a), np.zeros_like(a))[2] == 1.0


def test_f_matches_exhaustive_oracle_on_shifted_square():
    cfg = M.MetricsConfig()
    gt = _square(10, 10, 12, (64, 64))
    tol = cfg.tolerance(gt.shape)
    assert tol == math.ceil(0.008 * math.hypot(64, 64)) == 1
    shift = int(2 * tol)
    pred = np.roll(gt, shift, axis=1)
    assert M.f_measure(pred, gt, cfg)[2] == oracle_f(pred, gt, tol)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1.0, 1.5, 2.0, 3.0]))
def test_f_matches_exhaustive_oracle_random(seed, tol):
    rng = np.random.default_rng(seed)
    gt = np.zeros((24, 24), bool)
    pred = np.zeros((24, 24), bool)
    for m in (gt, pred):
        for _ in range(2):
            y, x = rng.integers(0, 18, 2)
            m[y : y + rng.integers(2, 7), x : x + rng.integers(2, 7)] = True
    cfg = M.MetricsConfig(boundary_fraction=tol)
    assert M.f_measure(pred, gt, cfg)[2] == pytest.approx(oracle_f(pred, gt, tol), abs=1e-15)


def test_f_invariant_to_padding():
    gt = _square(5, 5, 8, (20, 20))
    pred = _square(6, 5, 8, (20, 20))
    cfg = M.MetricsConfig(boundary_fraction=1.0)
    padded = [np.pad(m, 7) for m in (pred, gt)]
    assert M.f_measure(pred, gt, cfg) == M.f_measure(*padded, cfg)


def test_aggregate_examples():
    assert M.aggregate([1, 1, 0, 0]) == (0.5, 0.5, 1.0)
    assert M.aggregate([0.7] * 9)[2] == 0.0
    assert M.aggregate([0.6, 0.9, 0.8])[1] == 1.0
    with pytest.raises(ValueError):
        M.aggregate([])


def test_aggregate_quartiles_put_remainder_first():
    # 6 frames: bins of 2, 2, 1, 1
    assert M.aggregate([1, 0, 1, 1, 1, 0])[2] == 0.5 - 0.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.randoms())
def test_aggregate_mean_order_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert M.aggregate(shuffled)[0] == pytest.approx(M.aggregate(values)[0])


def test_decay_and_recall_depend_on_order():
    assert M.aggregate([1, 1, 0, 0])[2] == 1.0
    assert M.aggregate([0, 0, 1, 1])[2] == -1.0
    assert M.aggregate([0.6, 0.4])[1] == 0.5


def _cross(cy, cx, arm=4, half=2, shape=(48, 48)):
    m = np.zeros(shape, bool)
    m[cy - arm - half : cy + arm + half, cx - half : cx + half] = True
    m[cy - half : cy + half, cx - arm - half : cx + arm + half] = True
    return m


def test_temporal_stability_examples():
    sq = _square(10, 10, 12, (48, 48))
    assert M.temporal_stability([sq, sq, sq]) == 0.0
    moved = [np.roll(np.roll(sq, 3 * k, axis=1), 2 * k, axis=0) for k in range(4)]
    translated = M.temporal_stability(moved)
    assert translated < 1e-6
    deformed = M.temporal_stability([_square(18, 18, 12, (48, 48)), _cross(24, 24)])
    assert deformed > translated


def test_temporal_stability_empty_frame_costs_most():
    sq = _square(10, 10)
    assert M.temporal_stability([sq, np.zeros_like(sq)]) == 1.0
    with pytest.raises(ValueError):
        M.temporal_stability([sq])


def test_shape_context_rows_are_distributions():
    pts = M.sample_contour(_cross(24, 24), 50)
    h = M.shape_context(pts)
    assert h.shape == (50, 60)
    np.testing.assert_allclose(h.sum(axis=1), 1.0)


def test_evaluate_perfect_and_skips_first_frame():
    gt = [_square(5, 5), _square(6, 6), _square(7, 7)]
    gt = [m.astype(np.uint8) for m in gt]
    rep = M.evaluate({"a": gt}, {"a": gt})
    assert rep.J["mean"] == 1.0 and rep.F["mean"] == 1.0
    pred = [np.zeros_like(gt[0]), gt[1], gt[2]]
    assert M.evaluate({"a": pred}, {"a": gt}).J["mean"] == 1.0
    d = rep.to_dict()
    assert d["schema"] == 1 and d["sequences"]["a"]["1"]["frames"] == [1, 2]
    assert "Decay D" in rep.table()


def test_evaluate_averages_objects():
    gt = np.zeros((20, 20), np.uint8)
    gt[2:6, 2:6] = 1
    gt[10:14, 10:14] = 2
    pred = gt.copy()
    pred[pred == 2] = 0  # object 2 lost
    rep = M.evaluate({"s": [gt, pred]}, {"s": [gt, gt]})
    assert rep.J["mean"] == 0.5
