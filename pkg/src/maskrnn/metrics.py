"""Region similarity J, contour accuracy F and temporal stability T."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import maximum_bipartite_matching
from scipy.spatial import cKDTree
from skimage import measure

from .vision import contour_extract

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class MetricsConfig:
    recall_threshold: float = 0.5
    boundary_fraction: float = 0.008  # of the image diagonal
    angular_bins: int = 12
    radial_bins: int = 5
    contour_samples: int = 100
    inner_radius: float = 0.125
    outer_radius: float = 2.0

    def __post_init__(self):
        if self.boundary_fraction <= 0:
            raise ValueError("MetricsConfig: boundary tolerance must be > 0")
        if self.angular_bins < 1 or self.radial_bins < 1 or self.contour_samples < 2:
            raise ValueError("MetricsConfig: bins must be >= 1 and contour_samples >= 2")

    def tolerance(self, shape):
        """Match radius in pixels; fractions are rounded up to whole pixels."""
        if self.boundary_fraction >= 1:
            return float(self.boundary_fraction)
        return float(math.ceil(self.boundary_fraction * math.hypot(*shape[:2])))


def iou(pred, gt):
    pred = np.asarray(pred) > 0
    gt = np.asarray(gt) > 0
    if pred.shape != gt.shape:
        raise ValueError(f"iou: shapes differ ({pred.shape} vs {gt.shape})")
    union = np.count_nonzero(pred | gt)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred & gt) / union


def contour_points(mask):
    return np.argwhere(contour_extract(mask)).astype(np.float64)


def match_count(points_a, points_b, tolerance):
    """Size of a maximum matching between two point sets where a pair is an
    edge iff its Euclidean distance is within ``tolerance``."""
    if len(points_a) == 0 or len(points_b) == 0:
        return 0
    graph = cKDTree(points_a).sparse_distance_matrix(cKDTree(points_b), tolerance, output_type="coo_matrix")
    graph.data[:] = 1.0
    # explicit zeros would be dropped; edges are marked with 1
    graph = graph.tocsr()
    graph.eliminate_zeros()
    if graph.nnz == 0:
        return 0
    match = maximum_bipartite_matching(graph, perm_type="column")
    return int(np.count_nonzero(match >= 0))


def f_measure(pred, gt, cfg=MetricsConfig()):
    """``(P, R, F)`` of the boundary matching between two binary masks."""
    pred = np.asarray(pred) > 0
    gt = np.asarray(gt) > 0
    if pred.shape != gt.shape:
        raise ValueError(f"f_measure: shapes differ ({pred.shape} vs {gt.shape})")
    pp, gp = contour_points(pred), contour_points(gt)
    if len(pp) == 0 and len(gp) == 0:
        return 1.0, 1.0, 1.0
    if len(pp) == 0 or len(gp) == 0:
        return 0.0, 0.0, 0.0
    matched = match_count(pp, gp, cfg.tolerance(pred.shape))
    p = matched / len(pp)
    r = matched / len(gp)
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return p, r, f


def aggregate(values, cfg=MetricsConfig()):
    """``(mean, recall, decay)`` of a per-frame series.

    Decay compares the first and last of four contiguous, index-ordered bins
    (leftover frames go to the earliest bins).
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("aggregate: empty series")
    mean = float(np.mean(v))
    recall = float(np.mean(v > cfg.recall_threshold))
    # centring on the first value keeps a constant series at exactly zero decay
    bins = [b - v[0] for b in np.array_split(v, 4) if b.size]
    decay = float(np.mean(bins[0]) - np.mean(bins[-1]))
    return mean, recall, decay


# ---------------------------------------------------------------------------
# temporal stability


def sample_contour(mask, n, relative=False):
    """``n`` points spaced uniformly by arc length along the mask outline
    (all outlines concatenated), as (row, col); None for an empty mask.

    With ``relative`` the points are offsets from the first outline vertex,
    which makes the samples of integer-translated masks bitwise equal.
    """
    m = np.pad(np.asarray(mask) > 0, 1).astype(np.float64)
    curves = measure.find_contours(m, 0.5)
    if not curves:
        return None
    pts = np.concatenate(curves, axis=0) - 1.0
    if relative:
        pts = pts - pts[0]
    seg = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1))
    # zero-length jumps between separate outlines are fine; long jumps are not arcs
    breaks = np.cumsum([len(c) for c in curves])[:-1] - 1
    seg[breaks] = 0.0
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] == 0:
        return np.repeat(pts[:1], n, axis=0)
    s = np.linspace(0.0, arc[-1], n, endpoint=False)
    return np.stack([np.interp(s, arc, pts[:, 0]), np.interp(s, arc, pts[:, 1])], axis=1)


def shape_context(points, cfg=MetricsConfig()):
    """Log-polar histograms (n x radial*angular), each summing to 1."""
    d = points[None, :, :] - points[:, None, :]
    dist = np.hypot(d[..., 0], d[..., 1])
    n = len(points)
    off = ~np.eye(n, dtype=bool)
    mean_dist = dist[off].mean() if n > 1 else 0.0
    hist = np.zeros((n, cfg.radial_bins * cfg.angular_bins))
    if mean_dist == 0:
        return hist
    r = dist / mean_dist
    theta = np.mod(np.arctan2(d[..., 0], d[..., 1]), 2 * np.pi)
    edges = np.logspace(np.log10(cfg.inner_radius), np.log10(cfg.outer_radius), cfg.radial_bins + 1)
    rbin = np.searchsorted(edges, r, side="right") - 1
    abin = np.minimum((theta / (2 * np.pi) * cfg.angular_bins).astype(int), cfg.angular_bins - 1)
    valid = off & (rbin >= 0) & (rbin < cfg.radial_bins)
    rows = np.nonzero(valid)[0]
    np.add.at(hist, (rows, rbin[valid] * cfg.angular_bins + abin[valid]), 1.0)
    sums = hist.sum(axis=1, keepdims=True)
    return np.divide(hist, sums, out=np.zeros_like(hist), where=sums > 0)


def chi2_cost(h1, h2):
    num = (h1[:, None, :] - h2[None, :, :]) ** 2
    den = h1[:, None, :] + h2[None, :, :]
    return 0.5 * np.sum(np.divide(num, den, out=np.zeros_like(num), where=den > 0), axis=2)


def shape_dissimilarity(mask_a, mask_b, cfg=MetricsConfig()):
    pa = sample_contour(mask_a, cfg.contour_samples, relative=True)
    pb = sample_contour(mask_b, cfg.contour_samples, relative=True)
    if pa is None or pb is None:
        return 1.0
    cost = chi2_cost(shape_context(pa, cfg), shape_context(pb, cfg))
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def temporal_stability(masks, cfg=MetricsConfig()):
    """Mean shape-context matching cost between adjacent frames."""
    if len(masks) < 2:
        raise ValueError("temporal_stability: need at least 2 frames")
    return float(np.mean([shape_dissimilarity(a, b, cfg) for a, b in zip(masks[:-1], masks[1:])]))


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    per_sequence: dict = field(default_factory=dict)  # seq -> obj -> {"J": [...], "F": [...], "T": x}
    J: dict = field(default_factory=dict)
    F: dict = field(default_factory=dict)
    T: float = 0.0

    def to_dict(self):
        return {"schema": SCHEMA_VERSION, "J": self.J, "F": self.F, "T": {"mean": self.T}, "sequences": self.per_sequence}

    def table(self):
        """Aligned text table with the J/F mean-recall-decay and T rows."""
        rows = [
            ("J", "Mean M", self.J["mean"]),
            ("J", "Recall O", self.J["recall"]),
            ("J", "Decay D", self.J["decay"]),
            ("F", "Mean M", self.F["mean"]),
            ("F", "Recall O", self.F["recall"]),
            ("F", "Decay D", self.F["decay"]),
            ("T", "Mean M", self.T),
        ]
        lines = [f"{'measure':<8}{'stat':<10}{'value':>8}"]
        lines += [f"{m:<8}{s:<10}{100 * v:>8.1f}" for m, s, v in rows]
        return "\n".join(lines)


def evaluate(predictions, ground_truth, cfg=MetricsConfig()):
    """Score predicted label maps against ground truth.

    Both arguments map sequence name -> list of label maps (None where a gt
    frame is unannotated).  The first frame is the given annotation and is
    skipped; objects are the ids present in the first gt frame.
    """
    per_seq = {}
    j_stats, f_stats, t_vals = [], [], []
    for seq in sorted(ground_truth):
        gts = ground_truth[seq]
        if seq not in predictions:
            raise KeyError(f"no predictions for sequence {seq!r}")
        preds = predictions[seq]
        if len(preds) != len(gts):
            raise ValueError(f"{seq}: {len(preds)} predicted frames vs {len(gts)} ground-truth frames")
        ids = [int(v) for v in np.unique(gts[0]) if v != 0]
        per_seq[seq] = {}
        for oid in ids:
            js, fs, frames = [], [], []
            for t in range(1, len(gts)):
                if gts[t] is None:
                    continue
                p, g = preds[t] == oid, gts[t] == oid
                js.append(iou(p, g))
                fs.append(f_measure(p, g, cfg)[2])
                frames.append(t)
            tmasks = [preds[t] == oid for t in range(1, len(preds))]
            tval = temporal_stability(tmasks, cfg) if len(tmasks) >= 2 else 0.0
            per_seq[seq][str(oid)] = {"frames": frames, "J": js, "F": fs, "T": tval}
            if js:
                j_stats.append(aggregate(js, cfg))
                f_stats.append(aggregate(fs, cfg))
            t_vals.append(tval)
    if not j_stats:
        raise ValueError("evaluate: no annotated frames to score")
    j = np.mean(np.asarray(j_stats), axis=0)
    f = np.mean(np.asarray(f_stats), axis=0)
    return MetricsReport(
        per_sequence=per_seq,
        J={"mean": float(j[0]), "recall": float(j[1]), "decay": float(j[2])},
        F={"mean": float(f[0]), "recall": float(f[1]), "decay": float(f[2])},
        T=float(np.mean(t_vals)) if t_vals else 0.0,
    )
