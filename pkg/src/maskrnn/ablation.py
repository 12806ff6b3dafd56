"""Component ablation: train and evaluate each toggle row over several seeds.

Rows differ only in their toggles.  Training is shared between rows whose
training-relevant toggles agree: restriction is inference-only, and the
recurrent row continues from the static parameters of the row before it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as D
from . import pipeline as P
from .metrics import iou

log = logging.getLogger(__name__)

# (row, baseline row, evaluated on the outlier videos)
COMPARISONS = (
    ("+FStream", "AStream", False),
    ("+Warp", "+FStream", False),
    ("+Apply", "+Train", True),
    ("+RNN", "+Apply", False),
)
SLACK = 0.01
MIN_WINS = 3


@dataclass
class AblationConfig:
    suite: D.SuiteConfig = field(
        default_factory=lambda: D.SuiteConfig(train_videos=10, test_videos=4, width=48, height=48, frames=8, max_objects=2)
    )
    outlier_videos: int = 4
    outlier_distractors: int = 2
    seeds: tuple = (0, 1, 2, 3, 4)
    model: P.ModelConfig = field(default_factory=lambda: P.ModelConfig(flow_source="provided"))
    train: P.TrainConfig = field(default_factory=lambda: P.TrainConfig(epochs=4, window=4, online_iterations=50))


def mean_iou(video, labels):
    """Mean IoU over objects and frames after the first."""
    scores = [
        iou(labels[t] == i, video.masks[t] == i)
        for t in range(1, len(video))
        if video.masks[t] is not None
        for i in range(1, video.n_objects + 1)
    ]
    return float(np.mean(scores))


def evaluate_videos(videos, params, cfg, tcfg):
    """Mean per-video IoU after per-object online finetuning."""
    out = []
    for v in videos:
        flows = P.FlowCache(v, cfg.flow, cfg.flow_source)
        tuned = P.online_finetune(v, v.masks[0], params, cfg, tcfg, flows) if tcfg.online_iterations else params
        out.append(mean_iou(v, P.infer(v, v.masks[0], tuned, cfg, flows).labels))
    return float(np.mean(out))


def _train_key(tg):
    return (tg.flow_stream, tg.warp_mask, tg.train_loc, tg.rnn)


def make_seed_data(cfg, seed):
    suite = replace(cfg.suite, seed=seed)
    train, test = D.make_suite(suite)
    outlier_cfg = replace(
        suite,
        train_videos=0,
        test_videos=cfg.outlier_videos,
        distractors=cfg.outlier_distractors,
        seed=seed + 10_000,
    )
    _, outliers = D.make_suite(outlier_cfg)
    return train, test, outliers


def run_seed(cfg, rows, seed):
    """``{row: (suite IoU, outlier IoU)}`` for one seed."""
    train, test, outliers = make_seed_data(cfg, seed)
    tcfg = replace(cfg.train, seed=seed)
    static_cache, final_cache, results = {}, {}, {}
    for name in rows:
        tg = P.ABLATION_ROWS[name]
        mcfg = P.with_toggles(cfg.model, tg)
        key = _train_key(tg)
        if key not in final_cache:
            skey = key[:3]
            if skey not in static_cache:
                static_cache[skey], _ = P.train_static(train, mcfg, replace(tcfg, stage="static"))
            params = static_cache[skey]
            if tg.rnn:
                params, _ = P.train_recurrent(train, mcfg, replace(tcfg, stage="recurrent"), params)
            final_cache[key] = params
        params = final_cache[key]
        results[name] = (evaluate_videos(test, params, mcfg, tcfg), evaluate_videos(outliers, params, mcfg, tcfg))
        log.info("event=ablation seed=%d row=%s iou=%.4f outlier_iou=%.4f", seed, name, *results[name])
    return results


@dataclass
class AblationResult:
    rows: list
    seeds: list
    scores: np.ndarray  # rows x seeds, synthetic suite
    outlier: np.ndarray  # rows x seeds, outlier-injected videos

    def mean(self, row, outlier=False):
        table = self.outlier if outlier else self.scores
        return float(table[self.rows.index(row)].mean())

    def checks(self):
        """One entry per applicable comparison: (row, base, on_outlier,
        mean difference, wins, passed)."""
        out = []
        for row, base, on_outlier in COMPARISONS:
            if row not in self.rows or base not in self.rows:
                continue
            table = self.outlier if on_outlier else self.scores
            a, b = table[self.rows.index(row)], table[self.rows.index(base)]
            diff = float(a.mean() - b.mean())
            wins = int(np.sum(a > b))
            need = 0.0 if on_outlier else -SLACK
            needed_wins = min(MIN_WINS, len(self.seeds))
            out.append((row, base, on_outlier, diff, wins, diff >= need and wins >= needed_wins))
        return out

    def to_dict(self):
        return {
            "schema": 1,
            "rows": self.rows,
            "seeds": list(self.seeds),
            "iou": self.scores.tolist(),
            "outlier_iou": self.outlier.tolist(),
            "checks": [
                {"row": r, "baseline": b, "outlier_subset": o, "mean_diff": d, "wins": w, "passed": p}
                for r, b, o, d, w, p in self.checks()
            ],
        }


def run_ablation(cfg=AblationConfig(), rows=None):
    rows = list(rows or P.ABLATION_ROWS)
    unknown = [r for r in rows if r not in P.ABLATION_ROWS]
    if unknown:
        raise KeyError(f"unknown ablation rows {unknown}; known: {list(P.ABLATION_ROWS)}")
    scores = np.zeros((len(rows), len(cfg.seeds)))
    outlier = np.zeros_like(scores)
    for k, seed in enumerate(cfg.seeds):
        res = run_seed(cfg, rows, seed)
        for r, name in enumerate(rows):
            scores[r, k], outlier[r, k] = res[name]
    return AblationResult(rows, list(cfg.seeds), scores, outlier)
