"""Define-by-run reverse-mode differentiation on numpy arrays.

Every op takes and returns :class:`Tensor` objects.  A graph is recorded only
for tensors that require gradients, and :meth:`Tensor.backward` releases it
once the gradients have been pushed to the leaves, so each training window
builds and frees its own graph.

Storage is float32.  Float64 inputs are kept as float64 end to end, which is
what the finite-difference checks rely on.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BCE_EPS = 1e-7


class ShapeError(ValueError):
    """Raised when operand shapes do not satisfy an op's contract."""


class NumericError(RuntimeError):
    """Raised when a loss or its inputs turn NaN or infinite."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        arr = np.asarray(data)
        if arr.dtype != np.float32 and arr.dtype != np.float64:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that
        requires gradients, then free the recorded graph."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            raise ShapeError(f"seed gradient shape {grad.shape} != output shape {self.shape}")

        order = _topological_order(self)
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    g = g.astype(node.data.dtype, copy=False)
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward)
    return Tensor(data)


def _same_shape(a, b, op):
    if a.shape != b.shape:
        for dim, (x, y) in enumerate(zip(a.shape, b.shape)):
            if x != y:
                raise ShapeError(f"{op}: dimension {dim} differs ({x} vs {y})")
        raise ShapeError(f"{op}: rank differs ({a.ndim} vs {b.ndim})")


# ---------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _same_shape(a, b, "mul")
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a, s):
    a = as_tensor(a)
    s = float(s)
    return _result(a.data * a.data.dtype.type(s), (a,), lambda g: (g * g.dtype.type(s),))


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,))


def sigmoid(a):
    a = as_tensor(a)
    out = _stable_sigmoid(a.data)
    return _result(out, (a,), lambda g: (g * out * (1 - out),))


def _stable_sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no inputs")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref):
            raise ShapeError("concat: rank differs")
        for dim, (x, y) in enumerate(zip(ref, t.shape)):
            if dim != axis and x != y:
                raise ShapeError(f"concat: dimension {dim} differs ({x} vs {y})")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def total(a):
    """Sum of all entries, accumulated in float64."""
    a = as_tensor(a)
    shape, dtype = a.shape, a.dtype
    out = np.array(np.sum(a.data, dtype=np.float64), dtype=dtype)
    return _result(out, (a,), lambda g: (np.full(shape, g, dtype=dtype),))


def pad2d(a, pad):
    """Zero-pad the trailing two axes by ``(top, bottom, left, right)``."""
    a = as_tensor(a)
    top, bottom, left, right = pad
    widths = [(0, 0)] * (a.ndim - 2) + [(top, bottom), (left, right)]
    h, w = a.shape[-2:]
    return _result(
        np.pad(a.data, widths),
        (a,),
        lambda g: (g[..., top : top + h, left : left + w],),
    )


def crop2d(a, top, left, height, width):
    a = as_tensor(a)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[..., top : top + height, left : left + width] = g
        return (full,)

    return _result(a.data[..., top : top + height, left : left + width].copy(), (a,), backward)


# ---------------------------------------------------------------------------
# layers


def conv2d(x, kernel, bias=None, stride=1, pad=0):
    """2-D cross-correlation of an NCHW input with an OCkk kernel."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4:
        raise ShapeError(f"conv2d: input must be NCHW, got rank {x.ndim}")
    if kernel.ndim != 4 or kernel.shape[2] != kernel.shape[3]:
        raise ShapeError(f"conv2d: kernel must be O x C x k x k, got {kernel.shape}")
    if stride < 1 or pad < 0:
        raise ValueError("conv2d: need stride >= 1 and pad >= 0")
    n, c, h, w = x.shape
    o, kc, k, _ = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d: channel dimension differs (input {c} vs kernel {kc})")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (o,):
            raise ShapeError(f"conv2d: bias dimension 0 must be {o}, got {bias.shape}")
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {h}x{w}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, k, stride, ho, wo)
    wmat = kernel.data.reshape(o, -1)
    out = (cols.astype(np.float64) @ wmat.T.astype(np.float64)).astype(x.dtype)
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2))

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        gk = (g2.T @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gb = None
        if bias is not None and bias.requires_grad:
            gb = np.sum(g, axis=(0, 2, 3), dtype=np.float64).astype(g.dtype)
        gx = None
        if x.requires_grad:
            dcols = (g2 @ wmat).reshape(n, ho, wo, c, k, k)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp
        return (gx, gk, gb)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _result(out, parents, backward)


def _im2col(xp, k, stride, ho, wo):
    n, c = xp.shape[:2]
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, : stride * (ho - 1) + 1 : stride, : stride * (wo - 1) + 1 : stride]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)


def max_pool_2x2(x):
    """Non-overlapping 2x2 max pooling; odd trailing rows/columns are dropped.
    Ties route the gradient to the first maximum in row-major window order."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"max_pool_2x2: input must be NCHW, got rank {x.ndim}")
    n, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    if ho < 1 or wo < 1:
        raise ShapeError(f"max_pool_2x2: spatial extent {h}x{w} too small")
    blocks = x.data[:, :, : 2 * ho, : 2 * wo].reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, ho, wo, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros((n, c, ho, wo, 4), dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * ho, 2 * wo)
        gx = np.zeros(x.shape, dtype=g.dtype)
        gx[:, :, : 2 * ho, : 2 * wo] = gb
        return (gx,)

    return _result(out, (x,), backward)


@functools.lru_cache(maxsize=64)
def interp_matrix(n_in, n_out):
    """Row-stochastic 1-D linear interpolation matrix (n_out x n_in) using
    half-pixel centres, edge-clamped."""
    if n_in < 1 or n_out < 1:
        raise ValueError(f"interpolation sizes must be positive, got {n_in} -> {n_out}")
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    rows = np.arange(n_out)
    np.add.at(mat, (rows, i0), 1 - frac)
    np.add.at(mat, (rows, i1), frac)
    mat.setflags(write=False)
    return mat


def bilinear_upsample(x, size):
    """Bilinear resize of the trailing two axes to ``size = (H, W)``.

    The backward pass applies the transposed interpolation matrices.
    """
    x = as_tensor(x)
    oh, ow = size
    if oh < 1 or ow < 1:
        raise ValueError(f"bilinear_upsample: target size must be positive, got {size}")
    h, w = x.shape[-2:]
    ah = interp_matrix(h, oh).astype(x.dtype)
    aw = interp_matrix(w, ow).astype(x.dtype)
    out = ah @ x.data @ aw.T
    return _result(out, (x,), lambda g: (ah.T @ g @ aw,))


def linear(x, weight, bias=None):
    """Fully connected layer: ``x @ weight.T + bias`` for x of shape (N, D)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2:
        raise ShapeError("linear: expects x (N, D) and weight (O, D)")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: dimension 1 differs (input {x.shape[1]} vs weight {weight.shape[1]})")
    out = x.data @ weight.data.T
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"linear: bias dimension 0 must be {weight.shape[0]}")
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        gx = g @ weight.data
        gw = g.T @ x.data
        if bias is None:
            return (gx, gw)
        return (gx, gw, np.sum(g, axis=0, dtype=np.float64).astype(g.dtype))

    return _result(out, parents, backward)


def spatial_linear(x, matrix):
    """Apply a fixed linear map (dense or scipy.sparse, shape HW x HW) to the
    flattened trailing two axes of ``x``; the backward pass uses its transpose."""
    x = as_tensor(x)
    shape = x.shape
    h, w = shape[-2:]
    if matrix.shape != (h * w, h * w):
        raise ShapeError(f"spatial_linear: operator {matrix.shape} does not match {h}x{w}")
    flat = x.data.reshape(-1, h * w)
    out = np.asarray((matrix @ flat.T).T, dtype=x.dtype).reshape(shape)

    def backward(g):
        gf = g.reshape(-1, h * w)
        return (np.asarray((matrix.T @ gf.T).T, dtype=g.dtype).reshape(shape),)

    return _result(out, (x,), backward)


def roi_pool(feature, cells, grid):
    """Max-pool the feature-map window ``cells = (y0, y1, x0, x1)`` (feature
    cells, half-open) onto a ``grid x grid`` lattice.

    ``feature`` is (1, C, h, w).  Bin edges follow the usual floor/ceil split
    so that small windows repeat cells rather than produce empty bins.
    """
    feature = as_tensor(feature)
    if feature.ndim != 4 or feature.shape[0] != 1:
        raise ShapeError(f"roi_pool: feature must be 1 x C x h x w, got {feature.shape}")
    if grid < 1:
        raise ValueError("roi_pool: grid must be >= 1")
    _, c, h, w = feature.shape
    y0, y1, x0, x1 = cells
    if not (0 <= y0 < y1 <= h and 0 <= x0 < x1 <= w):
        raise ShapeError(f"roi_pool: window {cells} outside feature map {h}x{w}")
    rh, rw = y1 - y0, x1 - x0
    out = np.empty((1, c, grid, grid), dtype=feature.dtype)
    flat_idx = np.empty((c, grid, grid), dtype=np.int64)
    fdata = feature.data[0]
    for i in range(grid):
        hs = y0 + (i * rh) // grid
        he = y0 + -((-(i + 1) * rh) // grid)
        for j in range(grid):
            ws = x0 + (j * rw) // grid
            we = x0 + -((-(j + 1) * rw) // grid)
            region = fdata[:, hs:he, ws:we].reshape(c, -1)
            arg = region.argmax(axis=1)
            out[0, :, i, j] = region[np.arange(c), arg]
            ry, rx = np.divmod(arg, we - ws)
            flat_idx[:, i, j] = (hs + ry) * w + (ws + rx)

    def backward(g):
        gf = np.zeros((c, h * w), dtype=g.dtype)
        rows = np.repeat(np.arange(c), grid * grid)
        np.add.at(gf, (rows, flat_idx.reshape(-1)), g[0].reshape(-1))
        return (gf.reshape(1, c, h, w),)

    return _result(out, (feature,), backward)


# ---------------------------------------------------------------------------
# losses


def _balance_weights(target):
    n = target.size
    fg = float(np.count_nonzero(target))
    return (n - fg) / n, fg / n


def weighted_bce_loss(pred, target):
    """Class-balanced binary cross entropy on probabilities.

    loss = -(w_fg * sum_fg log p + w_bg * sum_bg log(1-p)) / (H*W) with
    w_fg = |bg|/|all| and w_bg = |fg|/|all|.  Probabilities are clamped to
    [eps, 1-eps]; clamped entries receive no gradient.
    """
    pred = as_tensor(pred)
    target = np.asarray(target)
    if target.shape != pred.shape:
        raise ShapeError(f"weighted_bce_loss: target shape {target.shape} != pred shape {pred.shape}")
    fgm = target > 0.5
    w_fg, w_bg = _balance_weights(fgm)
    p = pred.data.astype(np.float64)
    pc = np.clip(p, BCE_EPS, 1 - BCE_EPS)
    n = p.size
    val = -(w_fg * np.sum(np.log(pc[fgm])) + w_bg * np.sum(np.log1p(-pc[~fgm]))) / n
    inside = (p >= BCE_EPS) & (p <= 1 - BCE_EPS)

    def backward(g):
        d = np.where(fgm, -w_fg / pc, w_bg / (1 - pc)) / n
        return ((float(g) * d * inside).astype(pred.dtype),)

    return _result(np.array(val, dtype=pred.dtype), (pred,), backward)


def weighted_bce_with_logits(logits, target):
    """Same loss as :func:`weighted_bce_loss` evaluated from pre-sigmoid
    responses, without clamping (used for training)."""
    logits = as_tensor(logits)
    target = np.asarray(target)
    if target.shape != logits.shape:
        raise ShapeError(f"weighted_bce_with_logits: target shape {target.shape} != logits shape {logits.shape}")
    fgm = target > 0.5
    w_fg, w_bg = _balance_weights(fgm)
    z = logits.data.astype(np.float64)
    # -log sigmoid(z) and -log(1 - sigmoid(z)), overflow-free
    softplus_neg = np.logaddexp(0.0, -z)
    softplus_pos = np.logaddexp(0.0, z)
    n = z.size
    val = (w_fg * np.sum(softplus_neg[fgm]) + w_bg * np.sum(softplus_pos[~fgm])) / n

    def backward(g):
        s = np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))
        d = np.where(fgm, w_fg * (s - 1), w_bg * s) / n
        return ((float(g) * d).astype(logits.dtype),)

    return _result(np.array(val, dtype=logits.dtype), (logits,), backward)


def smooth_l1_loss(pred, target):
    """Sum over coordinates of 0.5 x^2 (|x| < 1) or |x| - 0.5."""
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ShapeError(f"smooth_l1_loss: target shape {target.shape} != pred shape {pred.shape}")
    diff = pred.data.astype(np.float64) - target
    if not np.all(np.isfinite(diff)):
        raise NumericError("smooth_l1_loss: non-finite input")
    small = np.abs(diff) < 1
    val = np.sum(np.where(small, 0.5 * diff**2, np.abs(diff) - 0.5))

    def backward(g):
        d = np.where(small, diff, np.sign(diff))
        return ((float(g) * d).astype(pred.dtype),)

    return _result(np.array(val, dtype=pred.dtype), (pred,), backward)


# ---------------------------------------------------------------------------
# parameters, optimisation, checkpoints


class ParamStore:
    """Named trainable tensors, iterated in sorted name order."""

    def __init__(self, params=None):
        self._params = {}
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        data = value.data if isinstance(value, Tensor) else value
        self._params[name] = Tensor(np.array(data, dtype=np.float32), requires_grad=True)
        return self._params[name]

    @classmethod
    def of_tensors(cls, tensors):
        """A store over existing tensors, kept as they are (any dtype)."""
        view = cls()
        view._params.update(tensors)
        return view

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return sorted(self._params)

    def items(self):
        return [(k, self._params[k]) for k in self.names()]

    def subset(self, prefix):
        """A view sharing tensors whose name starts with ``prefix``."""
        view = ParamStore()
        for k, t in self.items():
            if k.startswith(prefix):
                view._params[k] = t
        return view

    def merged(self, other):
        view = ParamStore()
        view._params.update(self._params)
        for k, t in other.items():
            if k in view._params:
                raise KeyError(f"duplicate parameter name {k!r}")
            view._params[k] = t
        return view

    def renamed(self, old_prefix, new_prefix):
        """Deep copy with ``old_prefix`` replaced by ``new_prefix`` in names."""
        out = ParamStore()
        for k, t in self.items():
            if k.startswith(old_prefix):
                out.add(new_prefix + k[len(old_prefix):], t.data)
        return out

    def copy(self):
        return ParamStore({k: t.data for k, t in self.items()})

    def zero_grad(self):
        for _, t in self.items():
            t.grad = None

    def state(self):
        return {k: t.data.copy() for k, t in self.items()}


def kaiming_uniform(rng, shape, fan_in):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, state):
    """One bias-corrected Adam update of every tensor in ``params``.

    Every parameter must carry a gradient; gradients are cleared afterwards.
    """
    items = params.items()
    for name, t in items:
        if t.grad is None:
            raise ValueError(f"adam_step: parameter {name!r} has no gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for name, t in items:
        g = t.grad.astype(np.float64)
        m = state.m.get(name)
        if m is None:
            m = np.zeros(t.shape, dtype=np.float64)
            state.v[name] = np.zeros(t.shape, dtype=np.float64)
        v = state.v[name]
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        t.data = (t.data.astype(np.float64) - update).astype(t.data.dtype)
        t.grad = None
    return params, state


def save_checkpoint(path, params, meta=None):
    """Write a JSON manifest line followed by one little-endian f32 blob."""
    entries, blobs, offset = [], [], 0
    for name, t in params.items():
        raw = np.ascontiguousarray(t.data, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(t.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    manifest = {"format": "maskrnn-ckpt", "version": 1, "params": entries, "meta": meta or {}}
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(header)
        fh.write(b"\n")
        for raw in blobs:
            fh.write(raw)
    return path


def load_checkpoint(path, with_meta=False):
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing checkpoint manifest")
    manifest = json.loads(raw[:nl].decode("utf-8"))
    if manifest.get("format") != "maskrnn-ckpt":
        raise ValueError(f"{path}: not a maskrnn checkpoint")
    blob = raw[nl + 1 :]
    params = ParamStore()
    for e in manifest["params"]:
        start, end = e["offset"], e["offset"] + e["nbytes"]
        if end > len(blob):
            raise ValueError(f"{path}: truncated blob for {e['name']} at byte {nl + 1 + start}")
        arr = np.frombuffer(blob[start:end], dtype="<f4").reshape(e["shape"])
        params.add(e["name"], arr.astype(np.float32))
    if with_meta:
        return params, manifest.get("meta", {})
    return params
