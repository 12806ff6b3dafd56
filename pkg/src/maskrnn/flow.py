"""Dense optical flow: coarse-to-fine Horn-Schunck, Middlebury ``.flo`` I/O
and exact flow for synthetic scenes.

A field ``f`` returned by :func:`estimate_flow(a, b)` satisfies
``a(p) ~= b(p + f(p))``, which is the field :func:`maskrnn.vision.warp_backward`
needs to pull content of ``b`` onto the pixel grid of ``a``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import scene as scene_mod
from .vision import resize_bilinear

FLO_MAGIC = 202021.25
FLO_HEADER_BYTES = 12

_HS_KERNEL = np.array([[1, 2, 1], [2, 0, 2], [1, 2, 1]], dtype=np.float64) / 12.0


class FloError(ValueError):
    pass


@dataclass(frozen=True)
class FlowParams:
    alpha: float = 0.03
    iterations: int = 60
    levels: int = 3
    warps: int = 3

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("FlowParams: alpha must be > 0")
        if self.iterations < 1 or self.levels < 1 or self.warps < 1:
            raise ValueError("FlowParams: iterations, levels and warps must be >= 1")


def to_gray(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ np.array([0.299, 0.587, 0.114])
    if img.ndim == 3 and img.shape[2] == 1:
        return img[..., 0]
    raise ValueError(f"expected H x W or H x W x 3 image, got {img.shape}")


def _pyramid(img, levels):
    pyr = [img]
    for _ in range(levels - 1):
        prev = pyr[-1]
        h, w = prev.shape
        if min(h, w) < 8:
            break
        blurred = ndimage.gaussian_filter(prev, 1.0, mode="nearest")
        pyr.append(resize_bilinear(blurred, ((h + 1) // 2, (w + 1) // 2)))
    return pyr[::-1]


def _sample_clamped(img, flow):
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return ndimage.map_coordinates(img, [ys + flow[..., 1], xs + flow[..., 0]], order=1, mode="nearest")


def _horn_schunck_increment(a, bw, alpha, iterations):
    gx_a, gy_a = np.gradient(a)[1], np.gradient(a)[0]
    gy_b, gx_b = np.gradient(bw)
    ix = 0.5 * (gx_a + gx_b)
    iy = 0.5 * (gy_a + gy_b)
    it = bw - a
    denom = alpha * alpha + ix * ix + iy * iy
    du = np.zeros_like(a)
    dv = np.zeros_like(a)
    for _ in range(iterations):
        ub = ndimage.convolve(du, _HS_KERNEL, mode="nearest")
        vb = ndimage.convolve(dv, _HS_KERNEL, mode="nearest")
        common = (ix * ub + iy * vb + it) / denom
        du = ub - ix * common
        dv = vb - iy * common
    return du, dv


def estimate_flow(image_a, image_b, params=FlowParams()):
    """Flow field (H x W x 2, float32) with ``image_a(p) ~= image_b(p + flow(p))``."""
    a = to_gray(image_a)
    b = to_gray(image_b)
    if a.shape != b.shape:
        raise ValueError(f"estimate_flow: images differ in size ({a.shape} vs {b.shape})")
    a = ndimage.gaussian_filter(a, 0.5, mode="nearest")
    b = ndimage.gaussian_filter(b, 0.5, mode="nearest")
    pa, pb = _pyramid(a, params.levels), _pyramid(b, params.levels)
    flow = np.zeros(pa[0].shape + (2,))
    for level, (la, lb) in enumerate(zip(pa, pb)):
        if level > 0:
            h, w = la.shape
            ph, pw = flow.shape[:2]
            flow = resize_bilinear(flow, (h, w))
            flow[..., 0] *= w / pw
            flow[..., 1] *= h / ph
        for _ in range(params.warps):
            bw = _sample_clamped(lb, flow)
            du, dv = _horn_schunck_increment(la, bw, params.alpha, params.iterations)
            flow[..., 0] += du
            flow[..., 1] += dv
            flow[..., 0] = ndimage.median_filter(flow[..., 0], size=3, mode="nearest")
            flow[..., 1] = ndimage.median_filter(flow[..., 1], size=3, mode="nearest")
    return np.nan_to_num(flow).astype(np.float32)


# ---------------------------------------------------------------------------
# Middlebury .flo


def write_flo(path, flow):
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise FloError(f"flow must be H x W x 2, got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())
    return Path(path)


def read_flo(path):
    raw = Path(path).read_bytes()
    if len(raw) < FLO_HEADER_BYTES:
        raise FloError(f"{path}: truncated header at byte {len(raw)} (need {FLO_HEADER_BYTES})")
    magic, w, h = struct.unpack("<fii", raw[:FLO_HEADER_BYTES])
    if magic != np.float32(FLO_MAGIC):
        raise FloError(f"{path}: bad magic {magic!r} at byte 0, expected {FLO_MAGIC}")
    if w < 1 or h < 1:
        raise FloError(f"{path}: invalid size {w}x{h} at byte 4")
    need = FLO_HEADER_BYTES + 8 * w * h
    if len(raw) < need:
        raise FloError(f"{path}: truncated data at byte {len(raw)}, expected {need} bytes")
    data = np.frombuffer(raw, dtype="<f4", count=2 * w * h, offset=FLO_HEADER_BYTES)
    return data.reshape(h, w, 2).astype(np.float32)


def sidecar_paths(frame_path):
    """``(<frame>_fwd.flo, <frame>_bwd.flo)`` next to a frame image."""
    p = Path(frame_path)
    return p.with_name(p.stem + "_fwd.flo"), p.with_name(p.stem + "_bwd.flo")


# ---------------------------------------------------------------------------
# synthetic ground truth


def analytic_flow(scene, t, target=None):
    """Exact field at frame ``t`` pointing into frame ``target`` (default
    ``t + 1``, or ``t - 1`` on the last frame)."""
    if not 0 <= t < scene.frames:
        raise ValueError(f"frame {t} outside sequence of {scene.frames}")
    if target is None:
        target = t + 1 if t + 1 < scene.frames else t - 1
    return scene_mod.exact_flow(scene, t, target)
