"""Text tables, figures and overlay renderings."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image, ImageDraw  # noqa: E402

from .data import palette  # noqa: E402


def format_table(header, rows):
    """Aligned plain-text table; floats are printed with three decimals."""
    cells = [[f"{v:.3f}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(str(h)), *(len(r[i]) for r in cells)) for i, h in enumerate(header)]
    line = lambda vals: "  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(vals, widths)))
    out = [line([str(h) for h in header]), line(["-" * w for w in widths])]
    out += [line(r) for r in cells]
    return "\n".join(out)


def plot_metrics(report, path):
    """Per-sequence J/F means and the per-frame J curves of every object."""
    seqs = sorted(report.per_sequence)
    j_means, f_means = [], []
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 3.6))
    for seq in seqs:
        objs = report.per_sequence[seq]
        j_means.append(np.mean([np.mean(o["J"]) for o in objs.values() if o["J"]] or [0.0]))
        f_means.append(np.mean([np.mean(o["F"]) for o in objs.values() if o["F"]] or [0.0]))
        for oid, o in objs.items():
            if o["J"]:
                ax1.plot(o["frames"], o["J"], lw=1, alpha=0.7, label=f"{seq}/{oid}")
    x = np.arange(len(seqs))
    ax0.bar(x - 0.2, j_means, 0.4, label="J")
    ax0.bar(x + 0.2, f_means, 0.4, label="F")
    ax0.set_xticks(x, seqs, rotation=45, ha="right", fontsize=7)
    ax0.set_ylim(0, 1)
    ax0.set_title("per-sequence mean")
    ax0.legend(fontsize=7)
    ax1.set_ylim(0, 1.02)
    ax1.set_xlabel("frame")
    ax1.set_ylabel("J")
    ax1.set_title(f"J mean {report.J['mean']:.3f}  F mean {report.F['mean']:.3f}  T {report.T:.3f}")
    if len(ax1.lines) <= 12:
        ax1.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_ablation(names, per_seed, path, outlier=None):
    """Mean IoU per toggle row with the individual seeds overlaid.

    ``per_seed`` is rows x seeds; ``outlier`` an optional array of the same
    shape measured on the outlier-injected videos.
    """
    per_seed = np.asarray(per_seed, dtype=np.float64)
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7, 3.6))
    width = 0.38 if outlier is not None else 0.6
    shift = -width / 2 if outlier is not None else 0.0
    ax.bar(x + shift, per_seed.mean(axis=1), width, label="synthetic suite", color="#4c72b0")
    for k in range(per_seed.shape[1]):
        ax.plot(x + shift, per_seed[:, k], "k.", ms=4, alpha=0.6)
    if outlier is not None:
        outlier = np.asarray(outlier, dtype=np.float64)
        ax.bar(x + width / 2, outlier.mean(axis=1), width, label="with look-alike distractors", color="#dd8452")
        for k in range(outlier.shape[1]):
            ax.plot(x + width / 2, outlier[:, k], "k.", ms=4, alpha=0.6)
    ax.set_xticks(x, names)
    ax.set_ylabel("mean IoU")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def overlay(frame, labels, boxes=None, alpha=0.5):
    """RGB uint8 rendering: instances tinted with the label palette and
    their boxes outlined."""
    rgb = np.clip(np.asarray(frame, dtype=np.float64), 0, 1)
    labels = np.asarray(labels)
    pal = palette().astype(np.float64) / 255.0
    tint = pal[labels]
    fg = (labels > 0)[..., None]
    out = np.where(fg, (1 - alpha) * rgb + alpha * tint, rgb)
    img = Image.fromarray(np.rint(out * 255).astype(np.uint8), mode="RGB")
    if boxes:
        draw = ImageDraw.Draw(img)
        for i, box in enumerate(boxes, start=1):
            if box is None:
                continue
            x0, y0, x1, y1 = box.as_list() if hasattr(box, "as_list") else box
            if x1 <= x0 or y1 <= y0:
                continue
            colour = tuple(int(c) for c in palette()[i])
            draw.rectangle([x0, y0, x1 - 1, y1 - 1], outline=colour)
    return np.asarray(img)


def plot_training(losses_by_stage, path):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    for stage, losses in losses_by_stage.items():
        ax.plot(np.arange(1, len(losses) + 1), losses, marker="o", label=stage)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean window loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
