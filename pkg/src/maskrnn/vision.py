"""Image geometry: warping, boxes, morphology, mask perturbation and paired
augmentation.

Coordinates are pixel centres: column ``x`` and row ``y`` of an ``H x W`` array
sit at ``(x, y)``.  Flow fields are ``H x W x 2`` arrays holding ``(dx, dy)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from . import tensor as T


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, half-open: ``[x_min, x_max) x [y_min, y_max)``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def center(self):
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def area(self):
        return max(self.width, 0.0) * max(self.height, 0.0)

    def is_valid(self):
        return self.x_max > self.x_min and self.y_max > self.y_min

    def as_list(self):
        return [float(self.x_min), float(self.y_min), float(self.x_max), float(self.y_max)]

    def clamp(self, height, width):
        return BBox(
            min(max(self.x_min, 0.0), width),
            min(max(self.y_min, 0.0), height),
            min(max(self.x_max, 0.0), width),
            min(max(self.y_max, 0.0), height),
        )

    def as_list(self):
        return [float(self.x_min), float(self.y_min), float(self.x_max), float(self.y_max)]

    @classmethod
    def from_center(cls, cx, cy, w, h):
        return cls(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def check_flow(flow, shape=None):
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be H x W x 2, got {flow.shape}")
    if shape is not None and flow.shape[:2] != tuple(shape[:2]):
        raise ValueError(f"flow is {flow.shape[0]}x{flow.shape[1]} but the map is {shape[0]}x{shape[1]}")
    return flow


# ---------------------------------------------------------------------------
# warping


def warp_operator(flow):
    """Sparse HW x HW bilinear sampling operator for backward warping.

    Row ``p`` interpolates the source at ``p + flow(p)``; neighbours outside
    the image contribute nothing, i.e. read as zero.
    """
    flow = check_flow(flow)
    h, w = flow.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    sx = xs + flow[..., 0].astype(np.float64)
    sy = ys + flow[..., 1].astype(np.float64)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    rows = np.arange(h * w)
    data, ri, ci = [], [], []
    for dy, dx, wt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xx, yy = (x0 + dx).ravel(), (y0 + dy).ravel()
        wt = wt.ravel()
        ok = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h) & (wt != 0)
        data.append(wt[ok])
        ri.append(rows[ok])
        ci.append(yy[ok] * w + xx[ok])
    return sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))), shape=(h * w, h * w)
    )


def warp_backward(values, flow, operator=None):
    """Backward-warp ``values`` along ``flow``: ``out(p) = values(p + flow(p))``.

    ``values`` is an ``H x W`` or ``H x W x C`` array, or an NCHW
    :class:`~maskrnn.tensor.Tensor` (differentiable with respect to its
    values; the flow is a constant).
    """
    if isinstance(values, T.Tensor):
        shape = values.shape[-2:]
        flow = check_flow(flow, shape)
        op = operator if operator is not None else warp_operator(flow)
        return T.spatial_linear(values, op)
    arr = np.asarray(values)
    flow = check_flow(flow, arr.shape)
    op = operator if operator is not None else warp_operator(flow)
    h, w = arr.shape[:2]
    flat = arr.reshape(h * w, -1).astype(np.float64)
    out = (op @ flat).reshape(arr.shape)
    dtype = arr.dtype if np.issubdtype(arr.dtype, np.floating) else np.float32
    return out.astype(dtype)


def flow_magnitude(flow):
    flow = check_flow(flow).astype(np.float64)
    return np.sqrt(flow[..., 0] ** 2 + flow[..., 1] ** 2).astype(np.float32)


# ---------------------------------------------------------------------------
# boxes, components, contours, morphology


def tight_bbox(mask, min_area=1):
    """Tight box around the foreground of a binary mask, or None when the
    foreground has fewer than ``min_area`` pixels."""
    mask = np.asarray(mask) > 0
    if np.count_nonzero(mask) < max(min_area, 1):
        return None
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return BBox(float(cols[0]), float(rows[0]), float(cols[-1] + 1), float(rows[-1] + 1))


def box_mask(box, height, width):
    """Binary map of the pixels whose centres lie inside ``box``."""
    out = np.zeros((height, width), dtype=bool)
    if box is None:
        return out
    xs = np.arange(width)
    ys = np.arange(height)
    inx = (xs >= box.x_min - 0.5) & (xs < box.x_max - 0.5)
    iny = (ys >= box.y_min - 0.5) & (ys < box.y_max - 0.5)
    out[np.ix_(iny, inx)] = True
    return out


_CROSS = ndimage.generate_binary_structure(2, 1)


def connected_components(mask):
    """4-connected labelling; returns ``(labels, count)``."""
    labels, count = ndimage.label(np.asarray(mask) > 0, structure=_CROSS)
    return labels, int(count)


def contour_extract(mask):
    """Foreground pixels with at least one 4-neighbour in the background
    (pixels beyond the image border count as background)."""
    m = np.asarray(mask) > 0
    padded = np.pad(m, 1)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return m & ~interior


def disk(radius):
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx**2 + yy**2) <= r * r


def dilate(mask, radius):
    m = np.asarray(mask) > 0
    if radius <= 0:
        return m.copy()
    return ndimage.binary_dilation(m, structure=disk(radius))


def erode(mask, radius):
    m = np.asarray(mask) > 0
    if radius <= 0:
        return m.copy()
    return ndimage.binary_erosion(m, structure=disk(radius), border_value=0)


def resize_bilinear(image, size):
    """Bilinear resize of an ``H x W`` or ``H x W x C`` array to ``(H', W')``."""
    arr = np.asarray(image)
    oh, ow = size
    if oh < 1 or ow < 1:
        raise ValueError(f"resize_bilinear: target size must be positive, got {size}")
    ah = T.interp_matrix(arr.shape[0], oh)
    aw = T.interp_matrix(arr.shape[1], ow)
    if arr.ndim == 2:
        out = ah @ arr.astype(np.float64) @ aw.T
    else:
        out = np.einsum("oh,hwc,pw->opc", ah, arr.astype(np.float64), aw)
    return out.astype(arr.dtype if np.issubdtype(arr.dtype, np.floating) else np.float32)


def _affine_sample(arr, inv_matrix, inv_offset, order):
    """Resample ``arr`` (H x W [x C]) at ``inv_matrix @ (x, y) + inv_offset``."""
    h, w = arr.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inv_matrix[0, 0] * xs + inv_matrix[0, 1] * ys + inv_offset[0]
    sy = inv_matrix[1, 0] * xs + inv_matrix[1, 1] * ys + inv_offset[1]
    coords = np.stack([sy, sx])
    if arr.ndim == 2:
        return ndimage.map_coordinates(arr, coords, order=order, mode="constant", cval=0.0)
    return np.stack(
        [ndimage.map_coordinates(arr[..., c], coords, order=order, mode="constant", cval=0.0) for c in range(arr.shape[2])],
        axis=-1,
    )


def _rotation(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])


# ---------------------------------------------------------------------------
# mask perturbation


@dataclass(frozen=True)
class Perturbation:
    """One concrete draw of the mask perturbation.  The default is neutral."""

    dilation: int = 0
    deformation: tuple = (0.0, 0.0, 0.0, 0.0)
    scale: float = 1.0
    rotation: float = 0.0
    translation: tuple = (0.0, 0.0)

    def is_identity(self):
        return (
            self.dilation == 0
            and all(v == 0 for v in self.deformation)
            and self.scale == 1.0
            and self.rotation == 0.0
            and tuple(self.translation) == (0.0, 0.0)
        )


@dataclass(frozen=True)
class PerturbRanges:
    probability: float = 0.5
    max_dilation: int = 5
    max_deformation: float = 0.08
    scale: tuple = (0.9, 1.1)
    max_rotation: float = 10.0
    max_translation: float = 0.1


def sample_perturbation(mask, rng, ranges=PerturbRanges()):
    """Draw a random subset of {dilation, affine deformation, resize,
    rotation, translation}, each enabled with ``ranges.probability``."""
    on = rng.random(5) < ranges.probability
    dil = int(rng.integers(1, ranges.max_dilation + 1)) if on[0] else 0
    deform = tuple(rng.uniform(-ranges.max_deformation, ranges.max_deformation, 4)) if on[1] else (0.0,) * 4
    scale = float(rng.uniform(*ranges.scale)) if on[2] else 1.0
    rot = float(rng.uniform(-ranges.max_rotation, ranges.max_rotation)) if on[3] else 0.0
    shift = (0.0, 0.0)
    if on[4]:
        box = tight_bbox(mask)
        bw, bh = (box.width, box.height) if box is not None else (0.0, 0.0)
        f = ranges.max_translation
        shift = (float(rng.uniform(-f, f) * bw), float(rng.uniform(-f, f) * bh))
    return Perturbation(dil, deform, scale, rot, shift)


def apply_perturbation(mask, pert):
    """Apply a concrete :class:`Perturbation`; the affine part acts about the
    mask's box centre and uses nearest-neighbour sampling."""
    m = np.asarray(mask) > 0
    if pert.is_identity():
        return m.copy()
    out = dilate(m, pert.dilation) if pert.dilation > 0 else m
    a, b, c, d = pert.deformation
    lin = pert.scale * _rotation(pert.rotation) @ np.array([[1 + a, b], [c, 1 + d]])
    tx, ty = pert.translation
    if not np.allclose(lin, np.eye(2), rtol=0, atol=0) or tx or ty:
        box = tight_bbox(out)
        cx, cy = box.center if box is not None else (m.shape[1] / 2, m.shape[0] / 2)
        # pixel-centre box centre
        centre = np.array([cx - 0.5, cy - 0.5])
        inv = np.linalg.inv(lin)
        offset = centre - inv @ (centre + np.array([tx, ty]))
        out = _affine_sample(out.astype(np.float32), inv, offset, order=0) > 0.5
    return out


def perturb_mask(mask, rng, ranges=PerturbRanges()):
    """Randomly perturbed copy of a binary mask (same shape, still binary)."""
    return apply_perturbation(mask, sample_perturbation(mask, rng, ranges))


# ---------------------------------------------------------------------------
# paired augmentation

MIN_CROP = 8


@dataclass(frozen=True)
class Augmentation:
    """A concrete geometric transform.  ``scale > 1`` zooms in, i.e. crops a
    window of ``size / scale`` pixels; ``shift`` moves that window."""

    flip: bool = False
    rotation: float = 0.0
    scale: float = 1.0
    shift: tuple = (0.0, 0.0)

    def is_pure_flip(self):
        return self.rotation == 0.0 and self.scale == 1.0 and tuple(self.shift) == (0.0, 0.0)


@dataclass(frozen=True)
class AugmentRanges:
    flip_probability: float = 0.5
    max_rotation: float = 10.0
    scale: tuple = (0.9, 1.2)
    max_shift: float = 0.08


def sample_augmentation(rng, height, width, ranges=AugmentRanges()):
    flip = bool(rng.random() < ranges.flip_probability)
    rot = float(rng.uniform(-ranges.max_rotation, ranges.max_rotation))
    scale = float(rng.uniform(*ranges.scale))
    shift = (
        float(rng.uniform(-ranges.max_shift, ranges.max_shift) * width),
        float(rng.uniform(-ranges.max_shift, ranges.max_shift) * height),
    )
    return Augmentation(flip, rot, scale, shift)


def _as_list(x):
    if x is None:
        return [], None
    if isinstance(x, (list, tuple)):
        return list(x), "seq"
    return [x], "single"


def _restore(items, kind):
    if kind is None:
        return None
    if kind == "single":
        return items[0]
    return items


def apply_augmentation(frame, mask, flow, aug):
    """Apply one transform to a frame (H x W x C), mask(s) and flow field(s).

    ``mask`` and ``flow`` may each be a single array or a list of arrays.
    Flow vectors are mapped by the linear part of the transform, so a
    horizontal flip negates ``dx`` at the mirrored pixel.
    """
    frame = np.asarray(frame)
    h, w = frame.shape[:2]
    if h < MIN_CROP or w < MIN_CROP or min(h, w) / aug.scale < MIN_CROP:
        raise ValueError(f"augmentation crop smaller than {MIN_CROP}x{MIN_CROP} (image {h}x{w}, scale {aug.scale})")
    masks, mkind = _as_list(mask)
    flows, fkind = _as_list(flow)
    for m in masks:
        if np.asarray(m).shape[:2] != (h, w):
            raise ValueError("augment: mask and frame dimensions differ")
    for f in flows:
        check_flow(f, (h, w))

    if aug.is_pure_flip():
        if not aug.flip:
            return frame.copy(), _restore([np.array(m) for m in masks], mkind), _restore(
                [np.array(f) for f in flows], fkind
            )
        out_flows = []
        for f in flows:
            g = np.asarray(f)[:, ::-1].copy()
            g[..., 0] = -g[..., 0]
            out_flows.append(g)
        return (
            frame[:, ::-1].copy(),
            _restore([np.asarray(m)[:, ::-1].copy() for m in masks], mkind),
            _restore(out_flows, fkind),
        )

    flip_lin = np.diag([-1.0, 1.0]) if aug.flip else np.eye(2)
    flip_off = np.array([w - 1.0, 0.0]) if aug.flip else np.zeros(2)
    centre = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    lin = aug.scale * _rotation(aug.rotation)
    # forward map F(p) = centre + shift + lin @ (flip(p) - centre)
    fwd = lin @ flip_lin
    fwd_off = centre + np.asarray(aug.shift) + lin @ (flip_off - centre)
    inv = np.linalg.inv(fwd)
    inv_off = -inv @ fwd_off

    out_frame = _affine_sample(frame.astype(np.float64), inv, inv_off, order=1).astype(frame.dtype)
    out_masks = []
    for m in masks:
        m = np.asarray(m)
        res = _affine_sample(m.astype(np.float64), inv, inv_off, order=0)
        out_masks.append(res.astype(m.dtype))
    out_flows = []
    for f in flows:
        f = np.asarray(f)
        res = _affine_sample(f.astype(np.float64), inv, inv_off, order=1)
        res = res @ fwd.T
        out_flows.append(res.astype(f.dtype))
    return out_frame, _restore(out_masks, mkind), _restore(out_flows, fkind)


def augment_pair(frame, mask, flow, rng, ranges=AugmentRanges()):
    """Random resize/rotate/crop/flip applied identically to frame, mask and
    flow."""
    h, w = np.asarray(frame).shape[:2]
    return apply_augmentation(frame, mask, flow, sample_augmentation(rng, h, w, ranges))


def rotate90(frame, mask, flow, k=1):
    """Exact rotation by ``k`` quarter turns (``np.rot90`` orientation)."""
    k %= 4
    frame = np.rot90(np.asarray(frame), k).copy()
    masks, mkind = _as_list(mask)
    flows, fkind = _as_list(flow)
    masks = [np.rot90(np.asarray(m), k).copy() for m in masks]
    out_flows = []
    for f in flows:
        g = np.rot90(np.asarray(f), k).copy()
        for _ in range(k):
            g = np.stack([g[..., 1], -g[..., 0]], axis=-1)
        out_flows.append(g)
    return frame, _restore(masks, mkind), _restore(out_flows, fkind)
