"""Command line: synth, train, finetune, infer, eval, overlay, ablate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Failures print one ``error=<kind> reason="..."`` line on stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from contextlib import nullcontext
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import ablation as A
from . import data as D
from . import flow as flow_mod
from . import metrics as M
from . import pipeline as P
from . import report as R
from . import tensor as T

log = logging.getLogger("maskrnn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
RUN_KEYS = ("seed", "model", "train", "suite", "metrics", "ablation")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# run configuration


def load_run_config(path):
    """Read a JSON run config; unknown top-level keys are rejected here and
    unknown nested keys by the section parsers."""
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    unknown = sorted(set(cfg) - set(RUN_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys {unknown}; allowed: {list(RUN_KEYS)}")
    return cfg


def _merge(base, override):
    out = dict(base)
    for k, v in override.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _model_config(run, args, base=None):
    d = _merge(base or {}, run.get("model", {}))
    if getattr(args, "flow_source", None):
        d["flow_source"] = args.flow_source
    try:
        cfg = P.model_config_from_dict(d)
    except ValueError as exc:
        raise UsageError(f"model config: {exc}") from None
    if getattr(args, "toggles", None):
        if args.toggles not in P.ABLATION_ROWS:
            raise UsageError(f"unknown toggle row {args.toggles!r}; known: {list(P.ABLATION_ROWS)}")
        cfg = P.with_toggles(cfg, P.ABLATION_ROWS[args.toggles])
    return cfg


def _train_config(run, args, base=None):
    d = _merge(base or {}, run.get("train", {}))
    for flag, key in (
        ("stage", "stage"),
        ("epochs", "epochs"),
        ("window", "window"),
        ("learning_rate", "learning_rate"),
        ("online_iterations", "online_iterations"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            d[key] = value
    d["seed"] = _seed(run, args, d.get("seed", 0))
    try:
        return P.train_config_from_dict(d)
    except ValueError as exc:
        raise UsageError(f"train config: {exc}") from None


def _seed(run, args, default=0):
    """Flag, then run config, then the inherited (checkpoint) seed."""
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(run.get("seed", default))


def _manifest(args, **extra):
    out = {
        "schema": 1,
        "tool": "maskrnn",
        "version": __version__,
        "command": args.command,
        "argv": [a for a in sys.argv[1:]],
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": args.threads,
    }
    out.update(extra)
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# inputs


def _resolve_video(path, seq=None):
    """``(root, sequence)`` for a DAVIS root (plus ``--seq``) or a
    ``JPEGImages/<seq>`` folder."""
    path = Path(path)
    if (path / "JPEGImages").is_dir():
        names = D.list_sequences(path)
        if seq is None:
            if len(names) != 1:
                raise UsageError(f"{path} holds {len(names)} sequences; choose one with --seq")
            seq = names[0]
        return path, seq
    if path.parent.name == "JPEGImages" and path.is_dir():
        return path.parent.parent, path.name
    raise D.DataError(f"{path}: not a DAVIS root or JPEGImages/<sequence> folder")


def _load_video(args):
    root, seq = _resolve_video(args.video, getattr(args, "seq", None))
    return D.load_sequence(root, seq, load_flow=True)


def _load_training_set(root):
    root = Path(root)
    manifest = root / "manifest.json"
    if manifest.exists():
        doc = json.loads(manifest.read_text())
        if any(s.get("split") for s in doc.get("sequences", [])):
            return D.load_split(root, "train")
    return D.load_davis(root)


def _label_dirs(path):
    """``{sequence: folder}`` for a folder of PNGs, a folder of per-sequence
    folders, or a DAVIS root (its ``Annotations``)."""
    path = Path(path)
    if not path.is_dir():
        raise D.DataError(f"{path}: not a directory")
    if (path / "Annotations").is_dir():
        path = path / "Annotations"
    if any(p.suffix.lower() == ".png" for p in path.iterdir()):
        return {path.name: path}
    return {p.name: p for p in sorted(path.iterdir()) if p.is_dir()}


def _read_labels(folder, names=None):
    files = {p.stem: p for p in Path(folder).glob("*.png")}
    names = names or sorted(files)
    return names, [D.load_label_png(files[n]) if n in files else None for n in names]


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_params(path):
    try:
        return T.load_checkpoint(path, with_meta=True)
    except FileNotFoundError:
        raise D.DataError(f"checkpoint not found: {path}") from None
    except ValueError as exc:
        raise D.DataError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, run):
    suite_d = dict(run.get("suite", {}))
    for flag in ("train_videos", "test_videos", "width", "height", "frames", "max_objects", "distractors"):
        v = getattr(args, flag)
        if v is not None:
            suite_d[flag] = v
    suite_d["seed"] = _seed(run, args)
    try:
        suite = D.SuiteConfig.from_dict(suite_d)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    tic = time.perf_counter()
    train, test = D.make_suite(suite)
    out = Path(args.out)
    D.write_corpus(out, train, test, with_flow=not args.no_flow, extra={"suite": asdict(suite)})
    _write_json(
        out / "run.json",
        _manifest(args, config={"suite": asdict(suite)}, seed=suite.seed, paths={"out": str(out)},
                  timing={"seconds": time.perf_counter() - tic}),
    )
    log.info("event=synth out=%s train=%d test=%d", out, len(train), len(test))
    return EXIT_OK


def cmd_train(args, run):
    base_model, base_train, init = {}, {}, None
    if args.init:
        init, meta = _load_params(args.init)
        base_model = meta.get("config", {}).get("model", {})
        base_train = {k: v for k, v in meta.get("config", {}).get("train", {}).items() if k != "stage"}
    model = _model_config(run, args, base_model)
    tcfg = _train_config(run, args, base_train)
    videos = _load_training_set(args.data)
    if not videos:
        raise D.DataError(f"{args.data}: no training sequences")
    tic = time.perf_counter()
    caches = [P.FlowCache(v, model.flow, model.flow_source) for v in videos]
    if tcfg.stage == "static":
        params, hist = P.train_static(videos, model, tcfg, params=init, flow_caches=caches)
    elif tcfg.stage == "recurrent":
        params = init if init is not None else P.init_params(tcfg.seed, model)
        params, hist = P.train_recurrent(videos, model, tcfg, params, flow_caches=caches)
    else:
        raise UsageError("train: --stage must be static or recurrent (use finetune for the online stage)")
    config = {"model": P.config_to_dict(model), "train": P.config_to_dict(tcfg), "seed": tcfg.seed}
    meta = {
        "config": config,
        "stage": tcfg.stage,
        "data": str(args.data),
        "sequences": [v.name for v in videos],
        # a content hash keeps the checkpoint independent of where the input lives
        "init_sha256": _sha256(args.init) if args.init else None,
        "epoch_losses": hist.epoch_losses,
    }
    T.save_checkpoint(args.out, params, meta)
    seconds = time.perf_counter() - tic
    if args.manifest:
        _write_json(args.manifest, _manifest(args, config=config, seed=tcfg.seed,
                                             paths={"data": str(args.data), "checkpoint": str(args.out)},
                                             timing={"seconds": seconds}, epoch_losses=hist.epoch_losses))
    log.info("event=train stage=%s out=%s seconds=%.1f final_loss=%.5f", tcfg.stage, args.out, seconds,
             hist.epoch_losses[-1] if hist.epoch_losses else float("nan"))
    return EXIT_OK


def cmd_finetune(args, run):
    params, meta = _load_params(args.ckpt)
    cfgd = meta.get("config", {})
    model = _model_config(run, args, cfgd.get("model", {}))
    tcfg = _train_config(run, args, {k: v for k, v in cfgd.get("train", {}).items() if k != "stage"})
    tcfg = replace(tcfg, stage="online")
    video = _load_video(args)
    generic = T.ParamStore({n: t.data for n, t in params.items() if n.startswith(("seg/", "loc/"))})
    if not len(generic):
        raise D.DataError(f"{args.ckpt}: no generic seg/ or loc/ parameters to finetune")
    tic = time.perf_counter()
    tuned = P.online_finetune(video, video.masks[0], generic, model, tcfg)
    config = {"model": P.config_to_dict(model), "train": P.config_to_dict(tcfg), "seed": tcfg.seed}
    T.save_checkpoint(args.out, tuned, {
        "config": config,
        "stage": "online",
        "video": video.name,
        "objects": video.n_objects,
        "label_ids": video.label_ids,
        "base_sha256": _sha256(args.ckpt),
    })
    log.info("event=finetune video=%s objects=%d out=%s seconds=%.1f", video.name, video.n_objects, args.out,
             time.perf_counter() - tic)
    return EXIT_OK


def cmd_infer(args, run):
    params, meta = _load_params(args.ckpt)
    model = _model_config(run, args, meta.get("config", {}).get("model", {}))
    video = _load_video(args)
    if meta.get("objects") is not None and meta["objects"] != video.n_objects:
        raise D.DataError(
            f"{video.name}: checkpoint was finetuned for {meta['objects']} objects, video has {video.n_objects}"
        )
    tic = time.perf_counter()
    res = P.infer(video, video.masks[0], params, model)
    out = Path(args.out)
    # write the original annotation indices back
    lut = np.zeros(256, dtype=np.uint8)
    lut[1 : len(video.label_ids) + 1] = video.label_ids
    D.save_predictions([lut[m] for m in res.labels], out, video.frame_names)
    boxes = {
        "schema": 1,
        "sequence": video.name,
        "label_ids": video.label_ids,
        "frames": [
            {"frame": name, "boxes": {str(video.label_ids[i]): (b.as_list() if b is not None else None)
                                      for i, b in enumerate(frame_boxes)}}
            for name, frame_boxes in zip(video.frame_names, res.boxes)
        ],
    }
    _write_json(out / "boxes.json", boxes)
    _write_json(out / "run.json", _manifest(
        args,
        config={"model": P.config_to_dict(model)},
        seed=meta.get("config", {}).get("seed"),
        paths={"video": str(args.video), "checkpoint": str(args.ckpt), "out": str(out)},
        timing={"seconds": time.perf_counter() - tic, "per_frame": [0.0] + res.timing},
    ))
    log.info("event=infer video=%s frames=%d out=%s", video.name, len(video), out)
    return EXIT_OK


def cmd_eval(args, run):
    mcfg = _metrics_config(run)
    gt_dirs = _label_dirs(args.gt)
    pred_dirs = _label_dirs(args.pred)
    if len(gt_dirs) == 1 and len(pred_dirs) == 1:
        # a single sequence may sit in differently named folders
        pred_dirs = {next(iter(gt_dirs)): next(iter(pred_dirs.values()))}
    missing = sorted(set(gt_dirs) - set(pred_dirs))
    if missing:
        raise D.DataError(f"no predictions for sequences {missing}")
    gts, preds = {}, {}
    for seq, folder in gt_dirs.items():
        names, _ = _read_labels(folder)
        pred_files = {p.stem for p in Path(pred_dirs[seq]).glob("*.png")}
        # every frame that has a prediction or an annotation is scored in order
        names = sorted(set(names) | pred_files)
        _, g = _read_labels(folder, names)
        _, p = _read_labels(pred_dirs[seq], names)
        if g[0] is None:
            raise D.DataError(f"{seq}: missing first-frame annotation {names[0]}")
        absent = [n for n, x in zip(names, p) if x is None]
        if absent:
            raise D.DataError(f"{seq}: no prediction for frames {absent[:5]}")
        for n, a, b in zip(names, g, p):
            if a is not None and a.shape != b.shape:
                raise D.DataError(f"{seq}/{n}: prediction {b.shape} vs annotation {a.shape}")
        gts[seq], preds[seq] = g, p
    rep = M.evaluate(preds, gts, mcfg)
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    doc = rep.to_dict()
    doc["config"] = asdict(mcfg)
    _write_json(report_path, doc)
    table = rep.table()
    figure = report_path.with_suffix(".png")
    R.plot_metrics(rep, figure)
    print(table)
    log.info("event=eval sequences=%d J=%.4f F=%.4f T=%.4f report=%s figure=%s", len(gts), rep.J["mean"],
             rep.F["mean"], rep.T, report_path, figure)
    return EXIT_OK


def _metrics_config(run):
    try:
        return M.MetricsConfig(**run.get("metrics", {}))
    except TypeError as exc:
        raise UsageError(f"metrics config: {exc}") from None


def cmd_overlay(args, run):
    root, seq = _resolve_video(args.video, getattr(args, "seq", None))
    video = D.load_sequence(root, seq, load_flow=False)
    names, labels = _read_labels(args.masks, video.frame_names)
    boxes_path = Path(args.masks) / "boxes.json"
    boxes = None
    if boxes_path.exists():
        doc = json.loads(boxes_path.read_text())
        boxes = {f["frame"]: f["boxes"] for f in doc["frames"]}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = 0
    for name, frame, lab in zip(names, video.frames, labels):
        if lab is None:
            continue
        if boxes is not None and name in boxes:
            ids = sorted(int(k) for k in boxes[name])
            frame_boxes = [None] * (max(ids) if ids else 0)
            for k in ids:
                frame_boxes[k - 1] = boxes[name][str(k)]
        else:
            from .vision import tight_bbox

            frame_boxes = [tight_bbox(lab == i) for i in range(1, int(lab.max()) + 1)]
        img = R.overlay(frame, lab, frame_boxes, alpha=args.alpha)
        from PIL import Image

        Image.fromarray(img).save(out / f"{name}.png")
        written += 1
    if not written:
        raise D.DataError(f"{args.masks}: no masks matching the frames of {seq}")
    log.info("event=overlay video=%s frames=%d out=%s", seq, written, out)
    return EXIT_OK


def cmd_ablate(args, run):
    rows = [r.strip() for r in args.toggles.split(",") if r.strip()] if args.toggles else list(P.ABLATION_ROWS)
    unknown = [r for r in rows if r not in P.ABLATION_ROWS]
    if unknown:
        raise UsageError(f"unknown toggle rows {unknown}; known: {list(P.ABLATION_ROWS)}")
    cfg = A.AblationConfig()
    ab = dict(run.get("ablation", {}))
    try:
        if "suite" in ab or "suite" in run:
            cfg = replace(cfg, suite=D.SuiteConfig.from_dict(_merge(asdict(cfg.suite), _merge(run.get("suite", {}), ab.pop("suite", {})))))
        if "model" in run:
            cfg = replace(cfg, model=P.model_config_from_dict(_merge(P.config_to_dict(cfg.model), run["model"])))
        if "train" in run:
            cfg = replace(cfg, train=P.train_config_from_dict(_merge(P.config_to_dict(cfg.train), run["train"])))
        for key in ("outlier_videos", "outlier_distractors"):
            if key in ab:
                cfg = replace(cfg, **{key: int(ab.pop(key))})
        if "seeds" in ab:
            cfg = replace(cfg, seeds=tuple(int(s) for s in ab.pop("seeds")))
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    if ab:
        raise UsageError(f"unknown ablation keys {sorted(ab)}")
    if args.seeds is not None:
        cfg = replace(cfg, seeds=tuple(range(args.seeds)))
    if args.quick:
        cfg = replace(
            cfg,
            suite=replace(cfg.suite, train_videos=2, test_videos=1, width=32, height=32, frames=4),
            outlier_videos=1,
            train=replace(cfg.train, epochs=1, window=2, online_iterations=2),
        )
    tic = time.perf_counter()
    result = A.run_ablation(cfg, rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["row"] + [f"seed{s}" for s in result.seeds] + ["mean", "outlier mean"]
    table_rows = [
        [name] + [float(v) for v in result.scores[r]] + [result.mean(name), result.mean(name, outlier=True)]
        for r, name in enumerate(result.rows)
    ]
    table = R.format_table(header, table_rows)
    checks = result.checks()
    if checks:
        lines = [f"{row} vs {base}{' (outliers)' if o else ''}: diff={d:+.3f} wins={w}/{len(result.seeds)} "
                 f"{'pass' if p else 'FAIL'}" for row, base, o, d, w, p in checks]
        table += "\n\n" + "\n".join(lines)
    (out / "ablation.txt").write_text(table + "\n")
    doc = result.to_dict()
    _write_json(out / "ablation.json", doc)
    R.plot_ablation(result.rows, result.scores, out / "ablation.png", outlier=result.outlier)
    _write_json(out / "run.json", _manifest(
        args,
        config={"ablation": {
            "suite": asdict(cfg.suite),
            "model": P.config_to_dict(cfg.model),
            "train": P.config_to_dict(cfg.train),
            "outlier_videos": cfg.outlier_videos,
            "outlier_distractors": cfg.outlier_distractors,
            "seeds": list(cfg.seeds),
        }, "rows": rows},
        seed=list(cfg.seeds),
        paths={"out": str(out)},
        timing={"seconds": time.perf_counter() - tic},
    ))
    print(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="maskrnn", description="Recurrent instance-level video object segmentation.")
    p.add_argument("--version", action="version", version=f"maskrnn {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (keys: %s); flags override it" % ", ".join(RUN_KEYS))
    common.add_argument("--seed", type=int, help="random seed (default: config seed or 0)")
    common.add_argument("--threads", type=int, default=None, help="cap on BLAS/OpenMP worker threads")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic corpus in DAVIS layout")
    s.add_argument("--out", required=True)
    s.add_argument("--train-videos", type=int, help="default 20")
    s.add_argument("--test-videos", type=int, help="default 8")
    s.add_argument("--width", type=int, help="default 64")
    s.add_argument("--height", type=int, help="default 64")
    s.add_argument("--frames", type=int, help="default 12")
    s.add_argument("--max-objects", type=int, help="default 3")
    s.add_argument("--distractors", type=int, help="unlabelled look-alike objects per video (default 0)")
    s.add_argument("--no-flow", action="store_true", help="skip the .flo sidecars")
    s.set_defaults(func=cmd_synth)

    def model_flags(q):
        q.add_argument("--flow-source", choices=["auto", "provided", "estimate"],
                       help="auto: sidecar .flo files when present, else Horn-Schunck (default auto)")
        q.add_argument("--toggles", help="ablation row: " + ", ".join(P.ABLATION_ROWS) + " (default: all on)")

    t = sub.add_parser("train", parents=[common], help="offline training (static or recurrent stage)")
    t.add_argument("--stage", required=True, choices=["static", "recurrent"])
    t.add_argument("--data", required=True, help="DAVIS-layout root; the train split is used when listed")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--init", help="checkpoint to continue from (the static one for --stage recurrent)")
    t.add_argument("--epochs", type=int, help="default 10")
    t.add_argument("--window", type=int, help="BPTT window in frames (default 7)")
    t.add_argument("--learning-rate", type=float, help="default 1e-3, decayed x0.9 per epoch")
    t.add_argument("--manifest", help="also write a run manifest (with timing) here")
    model_flags(t)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("finetune", parents=[common], help="online finetuning on the first frame")
    f.add_argument("--video", required=True, help="DAVIS root (with --seq) or JPEGImages/<seq> folder")
    f.add_argument("--seq")
    f.add_argument("--ckpt", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--online-iterations", type=int, help="default 200")
    model_flags(f)
    f.set_defaults(func=cmd_finetune)

    i = sub.add_parser("infer", parents=[common], help="segment a video from its first-frame annotation")
    i.add_argument("--video", required=True, help="DAVIS root (with --seq) or JPEGImages/<seq> folder")
    i.add_argument("--seq")
    i.add_argument("--ckpt", required=True, help="generic or finetuned checkpoint")
    i.add_argument("--out", required=True, help="folder for label PNGs, boxes.json and run.json")
    model_flags(i)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", parents=[common], help="J/F/T report")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--report", required=True, help="JSON report path; the figure goes next to it as .png")
    e.set_defaults(func=cmd_eval)

    o = sub.add_parser("overlay", parents=[common], help="tinted instance overlays with boxes")
    o.add_argument("--video", required=True)
    o.add_argument("--seq")
    o.add_argument("--masks", required=True)
    o.add_argument("--out", required=True)
    o.add_argument("--alpha", type=float, default=0.5)
    o.set_defaults(func=cmd_overlay)

    a = sub.add_parser("ablate", parents=[common], help="component toggle matrix on the synthetic suite")
    a.add_argument("--toggles", help="comma-separated rows (default: " + ",".join(P.ABLATION_ROWS) + ")")
    a.add_argument("--out", required=True, help="folder for ablation.txt/.json/.png and run.json")
    a.add_argument("--seeds", type=int, help="number of seeds (default 5)")
    a.add_argument("--quick", action="store_true", help="tiny smoke-test suite")
    a.set_defaults(func=cmd_ablate)
    return p


def _fail(kind, code, reason):
    reason = str(reason).replace("\n", " ").replace('"', "'")
    print(f'error={kind} reason="{reason}"', file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(message)s", stream=sys.stderr, force=True)
    limiter = nullcontext()
    if args.threads is not None:
        if args.threads < 1:
            return _fail("usage", EXIT_USAGE, "--threads must be >= 1")
        from threadpoolctl import threadpool_limits

        limiter = threadpool_limits(limits=args.threads)
    try:
        with limiter:
            run = load_run_config(args.config)
            return args.func(args, run)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except (KeyError, TypeError) as exc:
        # unknown or mistyped config keys
        return _fail("usage", EXIT_USAGE, exc.args[0] if exc.args else exc)
    except (D.DataError, flow_mod.FloError, P.MissingFlowError, FileNotFoundError, OSError) as exc:
        return _fail("data", EXIT_DATA, exc)
    except ValueError as exc:
        return _fail("data", EXIT_DATA, exc)
    except P.NumericError as exc:
        return _fail("numeric", EXIT_NUMERIC, exc)


if __name__ == "__main__":
    sys.exit(main())
