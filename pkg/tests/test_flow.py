import struct

import numpy as np
import pytest

from maskrnn import flow as F
from maskrnn.scene import SceneObject, SynthScene, value_noise


def _texture(seed, size=48):
    img = value_noise(np.random.default_rng(seed), size=size)
    return np.stack([img, 0.5 * img, 1 - img], axis=-1)


def test_identical_images_give_near_zero_flow():
    img = _texture(0)
    flow = F.estimate_flow(img, img)
    assert np.mean(np.hypot(flow[..., 0], flow[..., 1])) < 0.05


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_unit_translation_recovered(seed):
    big = _texture(seed, 64)
    a = big[8:56, 8:56]
    b = big[8:56, 7:55]  # b(x) = a(x - 1): content moves one pixel right
    flow = F.estimate_flow(a, b)
    inner = flow[8:-8, 8:-8]
    assert abs(inner[..., 0].mean() - 1.0) < 0.25
    assert abs(inner[..., 1].mean()) < 0.25


def test_flat_images_stay_finite():
    a = np.full((32, 32, 3), 0.4)
    flow = F.estimate_flow(a, a)
    assert np.all(np.isfinite(flow)) and np.abs(flow).max() < 1.0


def test_estimate_flow_rejects_size_mismatch():
    with pytest.raises(ValueError, match="differ"):
        F.estimate_flow(np.zeros((8, 8)), np.zeros((8, 9)))


def test_flo_round_trip(tmp_path):
    flow = np.random.default_rng(0).standard_normal((7, 5, 2)).astype(np.float32)
    flow[0, 0, 0] = -0.0
    p = F.write_flo(tmp_path / "a.flo", flow)
    back = F.read_flo(p)
    assert back.tobytes() == flow.tobytes()


def test_flo_size_arithmetic(tmp_path):
    p = F.write_flo(tmp_path / "a.flo", np.zeros((1, 2, 2)))
    assert p.stat().st_size == 12 + 16
    magic, w, h = struct.unpack("<fii", p.read_bytes()[:12])
    assert (magic, w, h) == (202021.25, 2, 1)


def test_flo_wrong_magic(tmp_path):
    p = tmp_path / "bad.flo"
    p.write_bytes(struct.pack("<fii", 1.0, 1, 1) + b"\0" * 8)
    with pytest.raises(F.FloError, match="202021.25"):
        F.read_flo(p)


def test_flo_truncated(tmp_path):
    p = F.write_flo(tmp_path / "a.flo", np.zeros((3, 3, 2)))
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(F.FloError, match="truncated"):
        F.read_flo(p)
    p.write_bytes(b"\0" * 5)
    with pytest.raises(F.FloError, match="header"):
        F.read_flo(p)


def test_sidecar_names(tmp_path):
    fwd, bwd = F.sidecar_paths(tmp_path / "00003.jpg")
    assert fwd.name == "00003_fwd.flo" and bwd.name == "00003_bwd.flo"


def _one_object_scene(velocity):
    obj = SceneObject("rectangle", (6, 5), (0.9, 0.2, 0.2), 7, (20, 24), velocity)
    return SynthScene(64, 64, 4, 3, (0, 0), [obj])


def test_analytic_flow_static_scene_is_zero():
    flow = F.analytic_flow(_one_object_scene((0, 0)), 1)
    assert np.all(flow == 0)


def test_analytic_flow_translation_inside_object():
    sc = _one_object_scene((2, 1))
    flow = F.analytic_flow(sc, 1)
    inside = flow[22:28, 17:27]  # object centre (22, 25) at t = 1, half sizes 6 x 5
    np.testing.assert_array_equal(inside[..., 0], 2.0)
    np.testing.assert_array_equal(inside[..., 1], 1.0)
    back = F.analytic_flow(sc, 1, 0)
    np.testing.assert_array_equal(back[22:28, 17:27], np.broadcast_to([-2.0, -1.0], (6, 10, 2)))
