"""Merge per-object probability maps into one instance label map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FusionConfig:
    tau: float = 0.5

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError(f"FusionConfig: tau must lie in (0, 1), got {self.tau}")


def fuse(maps, cfg=FusionConfig()):
    """Per-pixel argmax over objects; background where the winning
    probability is below ``cfg.tau``.  Ties go to the lowest object index
    (``np.argmax`` returns the first maximum)."""
    if len(maps) == 0:
        raise ValueError("fuse: need at least one probability map")
    stack = np.stack([np.asarray(m) for m in maps])
    if stack.ndim != 3:
        raise ValueError(f"fuse: maps must be H x W, got stack of shape {stack.shape}")
    winner = np.argmax(stack, axis=0)
    best = np.take_along_axis(stack, winner[None], axis=0)[0]
    labels = np.where(best >= cfg.tau, winner + 1, 0)
    return labels.astype(np.uint8 if len(maps) < 256 else np.int32)
