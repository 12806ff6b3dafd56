import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskrnn.fusion import FusionConfig, fuse

from oracles import brute_force_fuse


def test_single_object_threshold():
    assert fuse([np.array([[0.9, 0.3]])]).tolist() == [[1, 0]]


def test_two_objects_pick_larger():
    assert fuse([np.array([[0.6]]), np.array([[0.8]])])[0, 0] == 2


def test_ties_go_to_lowest_index():
    assert fuse([np.array([[0.7]]), np.array([[0.7]])])[0, 0] == 1


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        fuse([])
    with pytest.raises(ValueError):
        FusionConfig(tau=1.0)


def test_matches_brute_force_three_objects():
    rng = np.random.default_rng(0)
    maps = [rng.random((9, 11)) for _ in range(3)]
    np.testing.assert_array_equal(fuse(maps), brute_force_fuse(maps, 0.5))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1), st.floats(0.05, 0.95))
def test_labels_within_object_range(n, seed, tau):
    rng = np.random.default_rng(seed)
    # quantised values make ties common
    maps = [np.round(rng.random((6, 7)) * 4) / 4 for _ in range(n)]
    out = fuse(maps, FusionConfig(tau))
    assert out.min() >= 0 and out.max() <= n
    np.testing.assert_array_equal(out, brute_force_fuse(maps, tau))
