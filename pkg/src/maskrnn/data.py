"""Videos: synthetic generation, DAVIS-layout ingestion and indexed-PNG
prediction output."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import flow as flow_mod
from . import scene as scene_mod

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")


class DataError(ValueError):
    """A video or annotation that cannot be used, named in the message."""


@dataclass
class VideoRecord:
    name: str
    frames: list
    masks: list  # gt label maps; entries after the first may be None
    n_objects: int
    flows_fwd: list = None  # flows_fwd[t]: field from t to t+1 (None on the last frame)
    flows_bwd: list = None  # flows_bwd[t]: field from t to t-1 (None on the first frame)
    frame_names: list = None
    label_ids: list = None  # original annotation index of instance 1..N
    scene: object = None

    def __post_init__(self):
        if len(self.frames) != len(self.masks):
            raise DataError(f"{self.name}: {len(self.frames)} frames but {len(self.masks)} masks")
        if self.frame_names is None:
            self.frame_names = [f"{t:05d}" for t in range(len(self.frames))]
        if self.label_ids is None:
            self.label_ids = list(range(1, self.n_objects + 1))

    def __len__(self):
        return len(self.frames)

    @property
    def shape(self):
        return self.frames[0].shape[:2]

    def has_flows(self):
        return self.flows_fwd is not None and self.flows_bwd is not None


def synth_generate(scene, seed=0):
    """Render a :class:`~maskrnn.scene.SynthScene` with exact masks and flows."""
    frames, masks, owners = scene_mod.render(scene, seed)
    fwd, bwd = [], []
    for t in range(scene.frames):
        fwd.append(scene_mod.exact_flow(scene, t, t + 1, owners[t]) if t + 1 < scene.frames else None)
        bwd.append(scene_mod.exact_flow(scene, t, t - 1, owners[t]) if t > 0 else None)
    return VideoRecord(
        name=f"synth{seed:04d}",
        frames=frames,
        masks=masks,
        n_objects=scene.n_objects,
        flows_fwd=fwd,
        flows_bwd=bwd,
        scene=scene,
    )


@dataclass
class SuiteConfig:
    """Default desk-scale synthetic corpus."""

    train_videos: int = 20
    test_videos: int = 8
    width: int = 64
    height: int = 64
    frames: int = 12
    max_objects: int = 3
    max_speed: float = 3.0
    max_spin: float = 3.0
    distractors: int = 0
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown suite keys: {sorted(unknown)}")
        return cls(**d)


def make_suite(cfg=SuiteConfig()):
    """``(train, test)`` lists of synthetic videos with analytic flows."""
    rng = np.random.default_rng(cfg.seed)
    out = []
    for k in range(cfg.train_videos + cfg.test_videos):
        n = int(rng.integers(1, cfg.max_objects + 1))
        sc = scene_mod.random_scene(
            rng,
            width=cfg.width,
            height=cfg.height,
            frames=cfg.frames,
            n_objects=n,
            max_speed=cfg.max_speed,
            max_spin=cfg.max_spin,
            distractors=cfg.distractors,
        )
        video = synth_generate(sc, seed=int(rng.integers(1 << 30)))
        split = "train" if k < cfg.train_videos else "test"
        video.name = f"{split}{k:03d}"
        out.append(video)
    return out[: cfg.train_videos], out[cfg.train_videos :]


# ---------------------------------------------------------------------------
# indexed PNG


def palette(n_colors=256):
    """The usual VOC/DAVIS bit-interleaved colour table (index 0 is black)."""
    pal = np.zeros((n_colors, 3), dtype=np.uint8)
    for i in range(n_colors):
        c, r, g, b = i, 0, 0, 0
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        pal[i] = (r, g, b)
    return pal


def save_label_png(path, labels):
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise DataError(f"{path}: label map must be 2-D, got {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise DataError(f"{path}: labels must lie in 0..255")
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    img.putpalette(palette().ravel().tolist())
    img.save(path, format="PNG")
    return Path(path)


def load_label_png(path):
    img = Image.open(path)
    if img.mode not in ("P", "L"):
        raise DataError(f"{path}: expected an indexed (P) or grey (L) PNG, got mode {img.mode}")
    return np.array(img, dtype=np.uint8)


def save_frame_png(path, frame):
    arr = np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_frame(path):
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0


def save_predictions(masks, out_dir, frame_names=None):
    """One indexed PNG per frame, named like the input frames."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = frame_names or [f"{t:05d}" for t in range(len(masks))]
    paths = []
    for name, m in zip(names, masks):
        paths.append(save_label_png(out_dir / f"{name}.png", m))
    return paths


# ---------------------------------------------------------------------------
# DAVIS layout


def _frame_files(folder):
    return sorted(p for p in Path(folder).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_sequence(root, seq, load_flow=True, require_all_annotations=False):
    """Load ``JPEGImages/<seq>`` and ``Annotations/<seq>`` under ``root``."""
    root = Path(root)
    img_dir = root / "JPEGImages" / seq
    ann_dir = root / "Annotations" / seq
    files = _frame_files(img_dir)
    if not files:
        raise DataError(f"{seq}: no frames in {img_dir}")
    frames = [load_frame(p) for p in files]
    shape = frames[0].shape[:2]
    for p, f in zip(files, frames):
        if f.shape[:2] != shape:
            raise DataError(f"{seq}: frame {p.name} is {f.shape[:2]}, expected {shape}")
    raw_masks = []
    for p in files:
        ann = ann_dir / (p.stem + ".png")
        if ann.exists():
            m = load_label_png(ann)
            if m.shape != shape:
                raise DataError(f"{seq}: annotation {ann.name} is {m.shape}, frame is {shape}")
            raw_masks.append(m)
        else:
            if not raw_masks:
                raise DataError(f"{seq}: missing first-frame annotation {ann}")
            if require_all_annotations:
                raise DataError(f"{seq}: missing annotation {ann}")
            raw_masks.append(None)
    ids = [int(v) for v in np.unique(raw_masks[0]) if v != 0]
    if not ids:
        raise DataError(f"{seq}: first-frame annotation has no objects")
    lut = np.zeros(256, dtype=np.uint8)
    for new, old in enumerate(ids, start=1):
        lut[old] = new
    masks = []
    for p, m in zip(files, raw_masks):
        if m is None:
            masks.append(None)
            continue
        extra = sorted(set(int(v) for v in np.unique(m)) - set(ids) - {0})
        if extra:
            log.warning("%s/%s: labels %s absent from the first frame are ignored", seq, p.stem, extra)
        masks.append(lut[m])
    fwd = bwd = None
    if load_flow:
        fwd, bwd = [], []
        for t, p in enumerate(files):
            fp, bp = flow_mod.sidecar_paths(p)
            fwd.append(flow_mod.read_flo(fp) if fp.exists() and t + 1 < len(files) else None)
            bwd.append(flow_mod.read_flo(bp) if bp.exists() and t > 0 else None)
        if all(f is None for f in fwd + bwd):
            fwd = bwd = None
    return VideoRecord(
        name=seq,
        frames=frames,
        masks=masks,
        n_objects=len(ids),
        flows_fwd=fwd,
        flows_bwd=bwd,
        frame_names=[p.stem for p in files],
        label_ids=ids,
    )


def list_sequences(root):
    root = Path(root)
    manifest = root / "manifest.json"
    if manifest.exists():
        return [s["name"] for s in json.loads(manifest.read_text())["sequences"]]
    img_root = root / "JPEGImages"
    if not img_root.is_dir():
        raise DataError(f"{root}: no JPEGImages directory")
    return sorted(p.name for p in img_root.iterdir() if p.is_dir())


def load_davis(root_dir, sequences=None, load_flow=True):
    """Every sequence under a DAVIS-style root (or the named subset)."""
    names = sequences if sequences is not None else list_sequences(root_dir)
    return [load_sequence(root_dir, s, load_flow=load_flow) for s in names]


def write_sequence(root, video, split=None, with_flow=True):
    root = Path(root)
    img_dir = root / "JPEGImages" / video.name
    ann_dir = root / "Annotations" / video.name
    img_dir.mkdir(parents=True, exist_ok=True)
    ann_dir.mkdir(parents=True, exist_ok=True)
    for t, name in enumerate(video.frame_names):
        fpath = img_dir / f"{name}.png"
        save_frame_png(fpath, video.frames[t])
        if video.masks[t] is not None:
            save_label_png(ann_dir / f"{name}.png", video.masks[t])
        if with_flow and video.has_flows():
            fp, bp = flow_mod.sidecar_paths(fpath)
            if video.flows_fwd[t] is not None:
                flow_mod.write_flo(fp, video.flows_fwd[t])
            if video.flows_bwd[t] is not None:
                flow_mod.write_flo(bp, video.flows_bwd[t])
    entry = {"name": video.name, "frames": len(video), "objects": video.n_objects}
    if split:
        entry["split"] = split
    if video.scene is not None:
        entry["scene"] = video.scene.to_dict()
    return entry


def write_corpus(root, train, test, with_flow=True, extra=None):
    """Write videos in DAVIS layout plus ``manifest.json``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = [write_sequence(root, v, "train", with_flow) for v in train]
    entries += [write_sequence(root, v, "test", with_flow) for v in test]
    manifest = {"schema": 1, "sequences": entries}
    if extra:
        manifest.update(extra)
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return root / "manifest.json"


def load_split(root, split, load_flow=True):
    manifest = json.loads((Path(root) / "manifest.json").read_text())
    names = [s["name"] for s in manifest["sequences"] if s.get("split") == split]
    return load_davis(root, names, load_flow=load_flow)
