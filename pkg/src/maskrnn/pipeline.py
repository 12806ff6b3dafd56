"""Recurrent per-object segmentation: training stages, online finetuning and
sequence inference.

One generic network (``seg/...`` and ``loc/...`` parameters) is trained
offline on all object instances.  At test time it is copied once per
first-frame object (``obj<i>/seg/...``, ``obj<i>/loc/...``) and finetuned on
the first frame; inference then folds :func:`step_frame` over the video.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import flow as flow_mod
from . import locnet as L
from . import segnet as S
from . import tensor as T
from . import vision as V
from .fusion import FusionConfig, fuse

log = logging.getLogger(__name__)

STAGES = ("static", "recurrent", "online")


NumericError = T.NumericError


class MissingFlowError(RuntimeError):
    pass


@dataclass(frozen=True)
class Toggles:
    """Component switches of the ablation table."""

    flow_stream: bool = True
    warp_mask: bool = True
    train_loc: bool = True
    apply_loc: bool = True
    rnn: bool = True

    def __post_init__(self):
        if self.apply_loc and not self.train_loc:
            raise ValueError("Toggles: applying the localisation net requires training it")


ABLATION_ROWS = {
    "AStream": Toggles(False, False, False, False, False),
    "+FStream": Toggles(True, False, False, False, False),
    "+Warp": Toggles(True, True, False, False, False),
    "+Train": Toggles(True, True, True, False, False),
    "+Apply": Toggles(True, True, True, True, False),
    "+RNN": Toggles(True, True, True, True, True),
}


@dataclass
class TrainConfig:
    stage: str = "static"
    epochs: int = 10
    window: int = 7
    learning_rate: float = 1e-3
    lr_decay: float = 0.9  # per offline epoch
    online_learning_rate: float = 1e-3
    online_iterations: int = 200
    online_final_fraction: float = 0.1
    bbox_weight: float = 1.0
    augment: bool = True
    perturb: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"TrainConfig: stage must be one of {STAGES}")
        if self.window < 1 or (self.stage == "recurrent" and self.window < 2):
            raise ValueError("TrainConfig: window must be >= 1, and >= 2 for the recurrent stage")
        if not (self.learning_rate > 0 and self.online_learning_rate > 0):
            raise ValueError("TrainConfig: learning rates must be > 0")
        if self.epochs < 0 or self.online_iterations < 0:
            raise ValueError("TrainConfig: epochs and online_iterations must be >= 0")


@dataclass
class ModelConfig:
    segnet: S.SegNetConfig = field(default_factory=S.SegNetConfig)
    loc: L.LocConfig = field(default_factory=L.LocConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    flow: flow_mod.FlowParams = field(default_factory=flow_mod.FlowParams)
    toggles: Toggles = field(default_factory=Toggles)
    flow_source: str = "auto"  # auto | provided | estimate

    def __post_init__(self):
        if self.flow_source not in ("auto", "provided", "estimate"):
            raise ValueError(f"ModelConfig: unknown flow_source {self.flow_source!r}")


def init_params(seed, cfg=None):
    """Generic (object-agnostic) segmentation + localisation parameters."""
    cfg = cfg or ModelConfig()
    rng = np.random.default_rng(seed)
    params = S.init_segnet(rng, cfg.segnet, prefix="seg")
    return params.merged(L.init_locnet(rng, cfg.segnet.deepest_channels, cfg.loc, prefix="loc"))


def object_prefix(i):
    return f"obj{i}/"


# ---------------------------------------------------------------------------
# flows


class FlowCache:
    """Per-video flow fields: provided ones first, else Horn-Schunck."""

    def __init__(self, video, params=flow_mod.FlowParams(), source="auto"):
        self.video = video
        self.params = params
        self.source = source
        self._cache = {}

    def _provided(self, t, other):
        if self.source == "estimate" or not self.video.has_flows():
            return None
        table = self.video.flows_fwd if other == t + 1 else self.video.flows_bwd
        return table[t]

    def get(self, t, other):
        """Field at frame ``t`` pointing into frame ``other``."""
        key = (t, other)
        if key not in self._cache:
            f = self._provided(t, other)
            if f is None:
                if self.source == "provided":
                    raise MissingFlowError(
                        f"{self.video.name}: no flow for frame pair ({t}, {other}) and estimation is disabled"
                    )
                f = flow_mod.estimate_flow(self.video.frames[t], self.video.frames[other], self.params)
            self._cache[key] = np.asarray(f, dtype=np.float32)
        return self._cache[key]

    def pair(self, t):
        """``(backward, forward)`` fields for frame t (None at the ends)."""
        n = len(self.video)
        bwd = self.get(t, t - 1) if t > 0 else None
        fwd = self.get(t, t + 1) if t + 1 < n else None
        return bwd, fwd


def flow_magnitudes(bwd, fwd, shape):
    """Flow-stream magnitude channels; a missing side reuses the other."""
    if bwd is None and fwd is None:
        zero = np.zeros(shape, dtype=np.float32)
        return zero, zero
    mb = V.flow_magnitude(bwd) if bwd is not None else None
    mf = V.flow_magnitude(fwd) if fwd is not None else None
    return (mb if mb is not None else mf), (mf if mf is not None else mb)


# ---------------------------------------------------------------------------
# one object, one frame


@dataclass
class ObjectOutput:
    logits: T.Tensor
    prob: T.Tensor  # after restriction when enabled
    raw_prob: T.Tensor
    proposal: object
    box: object
    delta: T.Tensor = None


def object_forward(params, prefix, frame, warped, mag_prev, mag_next, cfg, proposal=None, restrict_output=None):
    """Segment one object in one frame.

    ``warped`` is the 1 x 1 x H x W (already warped) previous map, as a
    tensor when gradients must flow through it.  ``proposal`` overrides the
    box found on ``warped``.
    """
    tg = cfg.toggles
    warped = T.as_tensor(warped)
    h, w = warped.shape[-2:]
    dtype = warped.dtype
    frame_t = T.Tensor(np.asarray(frame, dtype=dtype).transpose(2, 0, 1)[None])
    app = T.concat([frame_t, warped], axis=1)
    flo = None
    if tg.flow_stream:
        mags = T.Tensor(np.stack([mag_prev, mag_next]).astype(dtype)[None])
        flo = T.concat([mags, warped], axis=1)
    seg = S.forward_seg(app, flo, params, cfg.segnet, prefix=f"{prefix}seg", use_flow=tg.flow_stream)
    if proposal is None:
        proposal = L.propose(warped.data[0, 0], cfg.loc)
    delta, box = None, None
    if (tg.train_loc or tg.apply_loc) and proposal is not None:
        delta = L.regress(seg.deepest, proposal, params, cfg.loc, (h, w), prefix=f"{prefix}loc")
        box = L.enlarge(L.apply_delta(proposal, delta.data[0]), cfg.loc.enlarge_factor, h, w)
    apply = tg.apply_loc if restrict_output is None else restrict_output
    prob = seg.prob
    if apply and box is not None and box.is_valid():
        prob = L.restrict(seg.prob, box)
    return ObjectOutput(seg.logits, prob, seg.prob, proposal, box, delta)


def participating(params, prefix, toggles, with_loc):
    """Sub-store of the parameters that receive gradients in one step."""
    names = S.stream_parameter_names(params, prefix=f"{prefix}seg", use_flow=toggles.flow_stream)
    if with_loc:
        names += [n for n in params.names() if n.startswith(f"{prefix}loc/")]
    view = T.ParamStore()
    for n in sorted(names):
        view._params[n] = params[n]
    return view


# ---------------------------------------------------------------------------
# recurrence


@dataclass
class RecurrentState:
    t: int
    maps: list  # per object H x W float32, restricted
    boxes: list  # last valid regressed box per object
    fallback: list  # proposal to use when the warped map yields none

    def copy(self):
        return RecurrentState(self.t, [m.copy() for m in self.maps], list(self.boxes), list(self.fallback))


def initial_state(y1, n_objects):
    y1 = np.asarray(y1)
    maps, boxes = [], []
    for i in range(1, n_objects + 1):
        m = (y1 == i).astype(np.float32)
        maps.append(m)
        boxes.append(V.tight_bbox(m))
    return RecurrentState(0, maps, boxes, [None] * n_objects)


def _object_params_prefix(params, i):
    p = object_prefix(i)
    return p if f"{p}seg/mix/w" in params else ""


@dataclass
class FrameResult:
    maps: list
    boxes: list
    labels: np.ndarray
    state: RecurrentState


def step_frame(state, prev_frame, frame, next_frame, params, cfg, flows=None):
    """Advance the recurrence by one frame.

    ``flows = (backward, forward)`` are the fields at the current frame
    pointing to the previous and next frame; the backward field is required
    (estimated from the frames when not given and estimation is allowed).
    """
    if flows is None or flows[0] is None:
        if cfg.flow_source == "provided":
            raise MissingFlowError(f"no flow for frame pair ({state.t + 1}, {state.t}) and estimation is disabled")
        bwd = flow_mod.estimate_flow(frame, prev_frame, cfg.flow)
        fwd = flow_mod.estimate_flow(frame, next_frame, cfg.flow) if next_frame is not None else None
    else:
        bwd, fwd = flows
    h, w = frame.shape[:2]
    mag_prev, mag_next = flow_magnitudes(bwd, fwd, (h, w))
    op = V.warp_operator(bwd) if cfg.toggles.warp_mask else None
    new = state.copy()
    new.t = state.t + 1
    maps, boxes = [], []
    for k, prev in enumerate(state.maps):
        prefix = _object_params_prefix(params, k + 1)
        warped = V.warp_backward(prev, bwd, op) if op is not None else prev
        warped = np.clip(warped, 0.0, 1.0).astype(np.float32)
        proposal = L.propose(warped, cfg.loc)
        lost = proposal is None
        if lost:
            proposal = state.fallback[k]
        out = object_forward(params, prefix, frame, warped[None, None], mag_prev, mag_next, cfg, proposal=proposal)
        prob = out.prob.data[0, 0].astype(np.float32)
        if out.box is not None and out.box.is_valid():
            new.boxes[k] = out.box
        if lost:
            # object lost: no restriction while it stays lost, widened last valid box as proposal
            prob = out.raw_prob.data[0, 0].astype(np.float32)
            if state.fallback[k] is None:
                last = new.boxes[k]
                new.fallback[k] = L.enlarge(last, cfg.loc.lost_enlarge_factor, h, w) if last is not None else None
        else:
            new.fallback[k] = None
        maps.append(prob)
        boxes.append(out.box)
    new.maps = maps
    labels = fuse(maps, cfg.fusion)
    return FrameResult(maps, boxes, labels, new)


@dataclass
class InferenceResult:
    labels: list
    boxes: list  # per frame, per object (None where absent)
    maps: list
    states: list
    timing: list


def infer(video, y1, params, cfg, flows=None, start=None):
    """Label maps for every frame; frame 1 is the given annotation.

    With ``start = (t, state)`` the fold resumes after frame ``t``; the
    returned lists then cover frames ``t+1..T-1`` only.
    """
    y1 = np.asarray(y1)
    n = video.n_objects
    flows = flows or FlowCache(video, cfg.flow, cfg.flow_source)
    if start is None:
        state = initial_state(y1, n)
        labels, boxes, maps, states = [y1.astype(np.uint8)], [list(state.boxes)], [state.maps], [state.copy()]
        t0 = 1
    else:
        t_prev, state = start
        state = state.copy()
        labels, boxes, maps, states = [], [], [], []
        t0 = t_prev + 1
    timing = []
    for t in range(t0, len(video)):
        tic = time.perf_counter()
        nxt = video.frames[t + 1] if t + 1 < len(video) else None
        res = step_frame(state, video.frames[t - 1], video.frames[t], nxt, params, cfg, flows=flows.pair(t))
        state = res.state
        labels.append(res.labels)
        boxes.append(res.boxes)
        maps.append(res.maps)
        states.append(state.copy())
        timing.append(time.perf_counter() - tic)
        log.debug("event=frame video=%s t=%d seconds=%.4f", video.name, t, timing[-1])
    return InferenceResult(labels, boxes, maps, states, timing)


# ---------------------------------------------------------------------------
# training


@dataclass
class Window:
    video: int
    obj: int
    start: int  # first predicted frame
    length: int


def enumerate_windows(dataset, window):
    """Tiled windows per video and object; the frame before ``start`` must
    contain the object."""
    out = []
    for v, video in enumerate(dataset):
        n = len(video)
        for start in range(1, n, window):
            length = min(window, n - start)
            prev = video.masks[start - 1]
            if prev is None:
                continue
            for i in range(1, video.n_objects + 1):
                if np.any(prev == i) and all(video.masks[s] is not None for s in range(start, start + length)):
                    out.append(Window(v, i, start, length))
    return out


def _check_loss(value, where):
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss at {where}")


def _window_loss(win, video, flows, params, cfg, tcfg, rng, dtype=np.float32):
    """Unrolled loss of one window.  Returns (loss tensor, used_loc)."""
    tg = cfg.toggles
    frames = list(range(win.start, win.start + win.length))
    prev_gt = video.masks[win.start - 1] == win.obj
    init = V.perturb_mask(prev_gt, rng) if tcfg.perturb else prev_gt
    imgs = [video.frames[t] for t in frames]
    gts = [(video.masks[t] == win.obj).astype(np.float32) for t in frames]
    fl = [flows.pair(t) for t in frames]
    if tcfg.augment:
        aug = V.sample_augmentation(rng, *video.shape)
        new_imgs, new_gts, new_fl = [], [], []
        init_aug = None
        for k, t in enumerate(frames):
            bwd, fwd = fl[k]
            masks = [gts[k], init.astype(np.float32)] if k == 0 else [gts[k]]
            fields = [f for f in (bwd, fwd) if f is not None]
            img, ms, fs = V.apply_augmentation(imgs[k], masks, fields, aug)
            it = iter(fs)
            new_fl.append((next(it) if bwd is not None else None, next(it) if fwd is not None else None))
            new_imgs.append(img)
            new_gts.append(ms[0])
            if k == 0:
                init_aug = ms[1]
        imgs, gts, fl, init = new_imgs, new_gts, new_fl, init_aug > 0.5
    h, w = imgs[0].shape[:2]
    carry = T.Tensor(np.asarray(init, dtype=dtype)[None, None])
    total = None
    used_loc = False
    for k in range(len(frames)):
        bwd, fwd = fl[k]
        mag_prev, mag_next = flow_magnitudes(bwd, fwd, (h, w))
        if tg.warp_mask and bwd is not None:
            warped = V.warp_backward(carry, bwd)
        else:
            warped = carry
        out = object_forward(params, "", imgs[k], warped, mag_prev, mag_next, cfg)
        loss = T.weighted_bce_with_logits(out.logits, gts[k][None, None])
        if tg.train_loc and out.delta is not None:
            gt_box = V.tight_bbox(gts[k] > 0.5)
            if gt_box is not None:
                loss = T.add(loss, T.scale(L.box_loss(out.delta, out.proposal, gt_box), tcfg.bbox_weight))
                used_loc = True
        total = loss if total is None else T.add(total, loss)
        carry = out.prob
    return total, used_loc


def _epoch_lr(tcfg, epoch):
    return tcfg.learning_rate * tcfg.lr_decay**epoch


@dataclass
class TrainLog:
    epoch_losses: list = field(default_factory=list)  # mean per epoch
    step_losses: list = field(default_factory=list)


def _train_windows(dataset, params, cfg, tcfg, window, tag, flow_caches=None):
    if not dataset:
        raise ValueError(f"{tag}: empty dataset")
    rng = np.random.default_rng(tcfg.seed)
    caches = flow_caches or [FlowCache(v, cfg.flow, cfg.flow_source) for v in dataset]
    windows = enumerate_windows(dataset, window)
    if not windows:
        raise ValueError(f"{tag}: dataset yields no training windows")
    state = T.AdamState(learning_rate=tcfg.learning_rate)
    history = TrainLog()
    for epoch in range(tcfg.epochs):
        state.learning_rate = _epoch_lr(tcfg, epoch)
        order = rng.permutation(len(windows))
        losses = []
        for idx in order:
            win = windows[idx]
            video = dataset[win.video]
            loss, used_loc = _window_loss(win, video, caches[win.video], params, cfg, tcfg, rng)
            value = loss.item()
            _check_loss(value, f"{tag} epoch {epoch} video {video.name} frame {win.start}")
            loss.backward()
            T.adam_step(participating(params, "", cfg.toggles, used_loc), state)
            params.zero_grad()
            losses.append(value)
        history.step_losses.extend(losses)
        history.epoch_losses.append(float(np.mean(losses)))
        log.info(
            "event=epoch stage=%s epoch=%d lr=%.3g loss=%.5f windows=%d",
            tag,
            epoch,
            state.learning_rate,
            history.epoch_losses[-1],
            len(losses),
        )
    return params, history


def train_static(dataset, cfg, tcfg, params=None, flow_caches=None):
    """Single-frame training with perturbed, warped ground-truth input masks."""
    params = params if params is not None else init_params(tcfg.seed, cfg)
    return _train_windows(dataset, params, cfg, tcfg, 1, "static", flow_caches)


def train_recurrent(dataset, cfg, tcfg, params, flow_caches=None):
    """Back-propagation through time over ``tcfg.window``-frame windows,
    continuing from (a copy of) static-stage parameters."""
    return _train_windows(dataset, params.copy(), cfg, tcfg, tcfg.window, "recurrent", flow_caches)


def online_finetune(video, y1, params, cfg, tcfg, flows=None):
    """Per-object copies of the generic net finetuned on frame 1.

    Returns a store with ``obj<i>/...`` names for every object in ``y1``.
    """
    y1 = np.asarray(y1)
    flows = flows or FlowCache(video, cfg.flow, cfg.flow_source)
    out = T.ParamStore()
    rng = np.random.default_rng(tcfg.seed)
    _, fwd = flows.pair(0)
    frame = video.frames[0]
    h, w = frame.shape[:2]
    iters = tcfg.online_iterations
    for i in range(1, video.n_objects + 1):
        target = y1 == i
        if not np.any(target):
            raise ValueError(f"{video.name}: object {i} is absent from the first-frame annotation")
        local = T.ParamStore({n: t.data for n, t in params.items() if n.startswith(("seg/", "loc/"))})
        state = T.AdamState(learning_rate=tcfg.online_learning_rate)
        for k in range(iters):
            frac = 1.0 - (1.0 - tcfg.online_final_fraction) * (k / max(iters - 1, 1))
            state.learning_rate = tcfg.online_learning_rate * frac
            inp = V.perturb_mask(target, rng) if tcfg.perturb else target
            img, tgt, fw = frame, target.astype(np.float32), fwd
            if tcfg.augment:
                aug = V.sample_augmentation(rng, h, w)
                img, (tgt, inp), fw = V.apply_augmentation(frame, [tgt, inp.astype(np.float32)], fwd, aug)
            mag_prev, mag_next = flow_magnitudes(None, fw, (h, w))
            warped = T.Tensor(np.asarray(inp, dtype=np.float32)[None, None] > 0.5)
            res = object_forward(local, "", img, warped, mag_prev, mag_next, cfg)
            loss = T.weighted_bce_with_logits(res.logits, np.asarray(tgt)[None, None] > 0.5)
            used_loc = False
            if cfg.toggles.train_loc and res.delta is not None:
                gt_box = V.tight_bbox(np.asarray(tgt) > 0.5)
                if gt_box is not None:
                    loss = T.add(loss, T.scale(L.box_loss(res.delta, res.proposal, gt_box), tcfg.bbox_weight))
                    used_loc = True
            _check_loss(loss.item(), f"online {video.name} object {i} iteration {k}")
            loss.backward()
            T.adam_step(participating(local, "", cfg.toggles, used_loc), state)
            local.zero_grad()
        log.info("event=finetune video=%s object=%d iterations=%d loss=%.5f", video.name, i, iters, loss.item() if iters else float("nan"))
        for name, t in local.items():
            out.add(f"{object_prefix(i)}{name}", t.data)
    return out


# ---------------------------------------------------------------------------
# config (de)serialisation


def _dc_from_dict(cls, d, where):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise KeyError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**d)


def model_config_from_dict(d):
    d = dict(d or {})
    kw = {}
    for key, cls in (
        ("segnet", S.SegNetConfig),
        ("loc", L.LocConfig),
        ("fusion", FusionConfig),
        ("flow", flow_mod.FlowParams),
        ("toggles", Toggles),
    ):
        if key in d:
            kw[key] = _dc_from_dict(cls, d.pop(key), key)
    if "flow_source" in d:
        kw["flow_source"] = d.pop("flow_source")
    if d:
        raise KeyError(f"unknown keys in model: {sorted(d)}")
    return ModelConfig(**kw)


def train_config_from_dict(d):
    return _dc_from_dict(TrainConfig, dict(d or {}), "train")


def config_to_dict(cfg):
    return asdict(cfg)


def with_toggles(cfg, toggles):
    return replace(cfg, toggles=toggles)
