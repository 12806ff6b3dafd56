"""Central finite differences in float64, independent of the backward pass."""

import numpy as np

from maskrnn import tensor as T


def numeric_grad(fn, arrays, index, h=1e-3):
    """d fn(*arrays) / d arrays[index] by central differences (in place)."""
    x = arrays[index]
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = float(fn(*arrays))
        x[idx] = old - h
        fm = float(fn(*arrays))
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def max_rel_error(analytic, numeric):
    """Largest absolute deviation relative to the gradient's magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_op(op, arrays, wrt=None, h=1e-3, seed=0):
    """Compare the f32 analytic gradient of ``sum(R * op(*inputs))`` with
    float64 finite differences.  Returns the worst relative error."""
    wrt = range(len(arrays)) if wrt is None else wrt
    arrays64 = [np.asarray(a, dtype=np.float64) for a in arrays]
    probe = op(*[T.Tensor(a) for a in arrays64]).data
    proj = np.random.default_rng(seed).standard_normal(probe.shape)

    def scalar64(*xs):
        return float(np.sum(op(*[T.Tensor(x) for x in xs]).data * proj))

    leaves = [T.Tensor(a.astype(np.float32), requires_grad=True) for a in arrays64]
    out = op(*leaves)
    out.backward(proj.astype(np.float32))
    worst = 0.0
    for i in wrt:
        num = numeric_grad(scalar64, arrays64, i, h)
        worst = max(worst, max_rel_error(leaves[i].grad, num))
    return worst


# ---------------------------------------------------------------------------
# random instances for every differentiable op, drawn away from kinks


def _spaced(rng, shape, gap=0.01):
    """Distinct values at least ``gap`` apart, so max selections are stable
    under a +-h perturbation."""
    n = int(np.prod(shape))
    vals = (rng.permutation(n) - n / 2) * gap
    return vals.reshape(shape) + rng.uniform(0, gap / 4)


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin * 2, x)


def _conv(rng):
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    x = rng.standard_normal((2, 3, 8, 8))
    k = rng.standard_normal((4, 3, 3, 3)) * 0.3
    b = rng.standard_normal(4)
    return (lambda x, k, b: T.conv2d(x, k, b, stride=stride, pad=pad)), [x, k, b]


def _pool(rng):
    return T.max_pool_2x2, [_spaced(rng, (1, 2, 6, 6))]


def _upsample(rng):
    size = (int(rng.integers(3, 9)), int(rng.integers(3, 9)))
    return (lambda x: T.bilinear_upsample(x, size)), [rng.standard_normal((1, 2, 2, 3))]


def _linear(rng):
    return T.linear, [rng.standard_normal((3, 5)), rng.standard_normal((4, 5)), rng.standard_normal(4)]


def _sigmoid(rng):
    return T.sigmoid, [rng.standard_normal((3, 4)) * 3]


def _relu(rng):
    return T.relu, [_away_from_zero(rng, (3, 4))]


def _bce(rng):
    target = (rng.random((1, 1, 4, 4)) < 0.4).astype(np.float64)
    target[0, 0, 0, 0] = 1.0
    target[0, 0, 0, 1] = 0.0
    return (lambda p: T.weighted_bce_loss(p, target)), [rng.uniform(0.05, 0.95, (1, 1, 4, 4))]


def _bce_logits(rng):
    target = (rng.random((1, 1, 4, 4)) < 0.4).astype(np.float64)
    return (lambda z: T.weighted_bce_with_logits(z, target)), [rng.standard_normal((1, 1, 4, 4)) * 2]


def _smooth_l1(rng):
    target = rng.standard_normal((1, 4)) * 2
    d = rng.uniform(-3, 3, (1, 4))
    # keep |pred - target| clear of the joint at 1
    d = np.where(np.abs(np.abs(d) - 1) < 0.05, d * 1.2, d)
    return (lambda p: T.smooth_l1_loss(p, target)), [target + d]


def _roi_pool(rng):
    y0, x0 = int(rng.integers(0, 4)), int(rng.integers(0, 4))
    y1, x1 = int(rng.integers(y0 + 1, 9)), int(rng.integers(x0 + 1, 9))
    grid = int(rng.integers(1, 5))
    return (lambda f: T.roi_pool(f, (y0, y1, x0, x1), grid)), [_spaced(rng, (1, 4, 8, 8))]


def _warp(rng):
    from maskrnn.vision import warp_backward

    flow = rng.uniform(-2.5, 2.5, (6, 7, 2))
    return (lambda m: warp_backward(m, flow)), [rng.standard_normal((1, 1, 6, 7))]


GRAD_CASES = {
    "conv2d": _conv,
    "max_pool_2x2": _pool,
    "bilinear_upsample": _upsample,
    "linear": _linear,
    "sigmoid": _sigmoid,
    "relu": _relu,
    "weighted_bce": _bce,
    "weighted_bce_logits": _bce_logits,
    "smooth_l1": _smooth_l1,
    "roi_pool": _roi_pool,
    "warp_backward": _warp,
}


def run_case(name, seed):
    rng = np.random.default_rng(seed)
    op, arrays = GRAD_CASES[name](rng)
    return check_op(op, arrays, seed=seed)
