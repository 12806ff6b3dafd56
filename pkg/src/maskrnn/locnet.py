"""Object localisation: box proposal from the warped mask, RoI pooling on the
deepest appearance feature, box regression, enlargement and restriction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .vision import BBox, box_mask, tight_bbox


@dataclass
class LocConfig:
    roi_grid: int = 7
    proposal_threshold: float = 0.5
    min_proposal_area: int = 9
    enlarge_factor: float = 1.25
    lost_enlarge_factor: float = 1.5
    fc_width: int = 256

    def __post_init__(self):
        if self.roi_grid < 1:
            raise ValueError("LocConfig: roi_grid must be >= 1")
        if self.enlarge_factor < 1 or self.lost_enlarge_factor < 1:
            raise ValueError("LocConfig: enlargement factors must be >= 1")


def propose(warped_prob, cfg=LocConfig()):
    """Tight box of the thresholded warped map, or None if too small."""
    m = np.asarray(warped_prob.data if isinstance(warped_prob, T.Tensor) else warped_prob)
    m = np.squeeze(m)
    return tight_bbox(m >= cfg.proposal_threshold, cfg.min_proposal_area)


def feature_cells(box, stride, feat_h, feat_w):
    """Project an input-pixel box onto feature cells ``(y0, y1, x0, x1)``,
    clamped to the map and at least one cell wide."""
    x0 = int(math.floor(box.x_min / stride))
    x1 = int(math.ceil(box.x_max / stride))
    y0 = int(math.floor(box.y_min / stride))
    y1 = int(math.ceil(box.y_max / stride))
    x0 = min(max(x0, 0), feat_w - 1)
    y0 = min(max(y0, 0), feat_h - 1)
    x1 = min(max(x1, x0 + 1), feat_w)
    y1 = min(max(y1, y0 + 1), feat_h)
    return y0, y1, x0, x1


def roi_pool(feature, box, grid, stride=None, image_size=None):
    """RoI max pooling of a (1 x) C x h x w feature over an input-pixel box.

    The stride defaults to ``image_size[0] / h``.
    """
    feature = T.as_tensor(feature)
    if feature.ndim == 3:
        feature = T.reshape(feature, (1,) + feature.shape)
    h, w = feature.shape[-2:]
    if stride is None:
        stride = image_size[0] / h if image_size is not None else 1.0
    return T.roi_pool(feature, feature_cells(box, stride, h, w), grid)


def encode_delta(proposal, gt):
    if proposal.width <= 0 or proposal.height <= 0 or gt.width <= 0 or gt.height <= 0:
        raise ValueError("encode_delta: boxes must have positive width and height")
    pcx, pcy = proposal.center
    gcx, gcy = gt.center
    return np.array(
        [
            (gcx - pcx) / proposal.width,
            (gcy - pcy) / proposal.height,
            math.log(gt.width / proposal.width),
            math.log(gt.height / proposal.height),
        ]
    )


def apply_delta(proposal, delta):
    if proposal.width <= 0 or proposal.height <= 0:
        raise ValueError("apply_delta: proposal must have positive width and height")
    tx, ty, tw, th = (float(v) for v in np.asarray(delta, dtype=np.float64).reshape(4))
    pcx, pcy = proposal.center
    # keep exp() finite for wild early-training outputs
    tw, th = min(tw, 10.0), min(th, 10.0)
    return BBox.from_center(
        pcx + tx * proposal.width,
        pcy + ty * proposal.height,
        proposal.width * math.exp(tw),
        proposal.height * math.exp(th),
    )


def enlarge(box, factor, height, width):
    """Scale width and height about the centre, then clamp to the image."""
    cx, cy = box.center
    return BBox.from_center(cx, cy, box.width * factor, box.height * factor).clamp(height, width)


def restrict(prob, box):
    """Zero every value outside ``box``.  Works on arrays (H x W) and on
    N x 1 x H x W tensors (the mask is a constant in the graph)."""
    if isinstance(prob, T.Tensor):
        h, w = prob.shape[-2:]
        keep = np.broadcast_to(box_mask(box, h, w), prob.shape).astype(prob.dtype)
        return T.mul(prob, T.Tensor(keep))
    arr = np.asarray(prob)
    h, w = arr.shape[-2:]
    return np.where(box_mask(box, h, w), arr, 0).astype(arr.dtype)


# ---------------------------------------------------------------------------
# regression head


def init_locnet(rng, in_channels, cfg=LocConfig(), prefix="loc"):
    params = T.ParamStore()
    d = in_channels * cfg.roi_grid * cfg.roi_grid
    params.add(f"{prefix}/fc1/w", T.kaiming_uniform(rng, (cfg.fc_width, d), d))
    params.add(f"{prefix}/fc1/b", np.zeros(cfg.fc_width, dtype=np.float32))
    params.add(f"{prefix}/fc2/w", T.kaiming_uniform(rng, (cfg.fc_width, cfg.fc_width), cfg.fc_width))
    params.add(f"{prefix}/fc2/b", np.zeros(cfg.fc_width, dtype=np.float32))
    # small output layer so the first predictions stay near the proposal
    params.add(f"{prefix}/out/w", (0.01 * T.kaiming_uniform(rng, (4, cfg.fc_width), cfg.fc_width)).astype(np.float32))
    params.add(f"{prefix}/out/b", np.zeros(4, dtype=np.float32))
    return params


def regress(feature, proposal, params, cfg, image_size, prefix="loc"):
    """Predicted box delta (1 x 4 tensor) for ``proposal``."""
    pooled = roi_pool(feature, proposal, cfg.roi_grid, image_size=image_size)
    x = T.reshape(pooled, (1, -1))
    x = T.relu(T.linear(x, params[f"{prefix}/fc1/w"], params[f"{prefix}/fc1/b"]))
    x = T.relu(T.linear(x, params[f"{prefix}/fc2/w"], params[f"{prefix}/fc2/b"]))
    return T.linear(x, params[f"{prefix}/out/w"], params[f"{prefix}/out/b"])


def box_loss(delta, proposal, gt_box):
    return T.smooth_l1_loss(delta, encode_delta(proposal, gt_box).reshape(1, 4))
