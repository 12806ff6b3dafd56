import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskrnn import tensor as T
from maskrnn.metrics import iou
from maskrnn.vision import (
    Augmentation,
    BBox,
    Perturbation,
    apply_augmentation,
    apply_perturbation,
    box_mask,
    connected_components,
    contour_extract,
    flow_magnitude,
    perturb_mask,
    rotate90,
    tight_bbox,
    warp_backward,
)


def test_warp_zero_flow_is_identity():
    x = np.random.default_rng(0).random((7, 9)).astype(np.float32)
    np.testing.assert_array_equal(warp_backward(x, np.zeros((7, 9, 2))), x)


def test_warp_unit_shift_matches_index_shift():
    x = np.zeros((5, 6))
    x[2, 3] = 1.0
    flow = np.zeros((5, 6, 2))
    flow[..., 0] = 1.0
    out = warp_backward(x, flow)
    expected = np.zeros_like(x)
    expected[:, :-1] = x[:, 1:]  # out(p) = x(p + 1), beyond the edge reads 0
    np.testing.assert_array_equal(out, expected)
    assert out[2, 2] == 1.0


def test_warp_half_pixel_is_midpoint():
    x = np.array([[0.0, 1.0]])
    flow = np.zeros((1, 2, 2))
    flow[..., 0] = 0.5
    assert warp_backward(x, flow)[0, 0] == 0.5


def test_warp_tensor_matches_array():
    rng = np.random.default_rng(1)
    x = rng.random((6, 5))
    flow = rng.uniform(-2, 2, (6, 5, 2))
    t = warp_backward(T.Tensor(x.reshape(1, 1, 6, 5)), flow)
    np.testing.assert_allclose(t.data[0, 0], warp_backward(x, flow), rtol=1e-12)


def test_warp_multichannel():
    rng = np.random.default_rng(2)
    x = rng.random((4, 4, 3))
    flow = rng.uniform(-1, 1, (4, 4, 2))
    out = warp_backward(x, flow)
    for c in range(3):
        np.testing.assert_allclose(out[..., c], warp_backward(x[..., c], flow))


def test_warp_rejects_mismatched_flow():
    with pytest.raises(ValueError, match="4x4"):
        warp_backward(np.zeros((3, 3)), np.zeros((4, 4, 2)))


def test_flow_magnitude():
    f = np.zeros((2, 2, 2))
    assert np.all(flow_magnitude(f) == 0)
    f[0, 0] = (3, 4)
    assert flow_magnitude(f)[0, 0] == 5
    rng = np.random.default_rng(0)
    f = rng.standard_normal((5, 4, 2))
    mag = flow_magnitude(f)
    for y in range(5):
        for x in range(4):
            assert mag[y, x] == pytest.approx(np.sqrt(f[y, x, 0] ** 2 + f[y, x, 1] ** 2), rel=1e-6)


def test_tight_bbox_examples():
    m = np.zeros((8, 8), bool)
    m[3, 5] = True
    assert tight_bbox(m) == BBox(5, 3, 6, 4)
    assert tight_bbox(np.zeros((4, 4))) is None


def _scan_box(mask):
    xs, ys = [], []
    for y in range(mask.shape[0]):
        for x in range(mask.shape[1]):
            if mask[y, x]:
                xs.append(x)
                ys.append(y)
    return BBox(min(xs), min(ys), max(xs) + 1, max(ys) + 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_tight_bbox_matches_scan(seed):
    rng = np.random.default_rng(seed)
    m = np.zeros((20, 24), bool)
    for _ in range(2):
        y, x = rng.integers(0, 17), rng.integers(0, 21)
        m[y : y + rng.integers(1, 4), x : x + rng.integers(1, 4)] = True
    assert tight_bbox(m) == _scan_box(m)


def test_box_mask_and_clamp():
    b = BBox(1, 2, 4, 3)
    m = box_mask(b, 5, 6)
    assert m.sum() == 3 and m[2, 1:4].all()
    assert BBox(-3, -1, 70, 9).clamp(8, 64) == BBox(0, 0, 64, 8)


def test_components_and_contour():
    m = np.zeros((6, 6), bool)
    m[0:2, 0:2] = True
    m[4:6, 3:6] = True
    labels, n = connected_components(m)
    assert n == 2 and labels[0, 0] != labels[5, 5]
    sq = np.zeros((5, 5), bool)
    sq[1:4, 1:4] = True
    c = contour_extract(sq)
    assert c.sum() == 8 and not c[2, 2]
    # the image border counts as background
    assert contour_extract(np.ones((3, 3))).sum() == 8


def _square(h=32, w=32, y=10, x=10, s=10):
    m = np.zeros((h, w), bool)
    m[y : y + s, x : x + s] = True
    return m


def test_neutral_perturbation_is_identity():
    m = _square()
    np.testing.assert_array_equal(apply_perturbation(m, Perturbation()), m)


def test_translation_perturbation_shifts():
    m = _square()
    out = apply_perturbation(m, Perturbation(translation=(2.0, 0.0)))
    np.testing.assert_array_equal(out, np.roll(m, 2, axis=1))
    # 10 x 8 overlap over a 10 x 12 union
    assert iou(out, m) == pytest.approx(80 / 120)


def test_dilation_perturbation_grows():
    m = _square()
    out = apply_perturbation(m, Perturbation(dilation=2))
    assert out[m].all() and out.sum() > m.sum()


def test_perturbation_deterministic():
    m = _square()
    a = perturb_mask(m, np.random.default_rng(5))
    b = perturb_mask(m, np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)


def test_flip_twice_is_identity():
    rng = np.random.default_rng(0)
    frame = rng.random((16, 20, 3))
    mask = rng.random((16, 20)) > 0.5
    flow = rng.standard_normal((16, 20, 2))
    aug = Augmentation(flip=True)
    once = apply_augmentation(frame, mask, flow, aug)
    twice = apply_augmentation(*once, aug)
    np.testing.assert_array_equal(twice[0], frame)
    np.testing.assert_array_equal(twice[1], mask)
    np.testing.assert_array_equal(twice[2], flow)


def test_flip_negates_dx_at_mirrored_pixel():
    flow = np.zeros((10, 12, 2))
    flow[3, 2] = (1.0, 0.0)
    _, _, out = apply_augmentation(np.zeros((10, 12, 3)), None, flow, Augmentation(flip=True))
    np.testing.assert_array_equal(out[3, 12 - 1 - 2], (-1.0, 0.0))
    assert np.count_nonzero(out) == 1


def test_rotate90_four_times_is_identity():
    rng = np.random.default_rng(1)
    frame, mask, flow = rng.random((9, 13, 3)), rng.random((9, 13)) > 0.3, rng.standard_normal((9, 13, 2))
    out = (frame, mask, flow)
    for _ in range(4):
        out = rotate90(*out, k=1)
    for a, b in zip(out, (frame, mask, flow)):
        np.testing.assert_array_equal(a, b)


def test_rotate90_keeps_flow_consistent_with_warp():
    # a mask warped by its flow must give the same answer before and after rotation
    m0 = _square(24, 24, 8, 6, 8).astype(np.float64)
    flow = np.zeros((24, 24, 2))
    flow[..., 0] = 2.0
    flow[..., 1] = -1.0
    ref = warp_backward(m0, flow)
    _, rm, rf = rotate90(np.zeros((24, 24, 3)), m0, flow, k=1)
    np.testing.assert_allclose(warp_backward(rm, rf), np.rot90(ref), atol=1e-12)


def test_affine_augmentation_maps_translation_flow():
    flow = np.zeros((32, 32, 2))
    flow[..., 0] = 1.0
    aug = Augmentation(rotation=90.0, scale=1.0)
    _, _, out = apply_augmentation(np.zeros((32, 32, 3)), None, flow, aug)
    centre = out[12:20, 12:20]
    np.testing.assert_allclose(centre[..., 0], 0.0, atol=1e-9)
    np.testing.assert_allclose(np.abs(centre[..., 1]), 1.0, atol=1e-9)


def test_augmentation_rejects_tiny_crop():
    with pytest.raises(ValueError, match="crop"):
        apply_augmentation(np.zeros((8, 8, 3)), None, None, Augmentation(scale=1.5))
