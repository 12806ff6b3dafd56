"""Two-stream binary segmentation network.

Each stream is a small VGG-style stack of 3x3 conv + ReLU stages separated by
2x2 max pooling.  The last activation of every stage is projected to a single
channel by a 1x1 conv, upsampled to the input size and summed (a hypercolumn
side output).  The appearance and flow responses are mixed by a learned
affine over the two channels and squashed by a sigmoid.

Projecting before upsampling is exactly equivalent to upsampling every
channel first, because both maps are linear per channel; it is just cheaper.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

APPEARANCE = "app"
FLOW = "flow"


@dataclass
class SegNetConfig:
    blocks: list = field(default_factory=lambda: [[2, 16], [2, 32], [2, 64], [2, 64], [2, 64]])
    appearance_channels: int = 4
    flow_channels: int = 3
    # > 0: the appearance stream starts out copying the warped mask (last
    # input channel) to the output with this logit gain
    warp_gain: float = 16.0

    def __post_init__(self):
        self.blocks = [list(map(int, b)) for b in self.blocks]
        if len(self.blocks) < 2:
            raise ValueError("SegNetConfig: need at least 2 stages")
        for convs, width in self.blocks:
            if convs < 1 or width < 1:
                raise ValueError(f"SegNetConfig: invalid stage {convs}x{width}")

    @property
    def stages(self):
        return len(self.blocks)

    @property
    def total_stride(self):
        return 2 ** (self.stages - 1)

    @property
    def deepest_channels(self):
        return self.blocks[-1][1]


def init_stream(params, rng, cfg, prefix, in_channels):
    c_in = in_channels
    for s, (convs, width) in enumerate(cfg.blocks, start=1):
        for j in range(1, convs + 1):
            name = f"{prefix}/s{s}_c{j}"
            params.add(f"{name}/w", T.kaiming_uniform(rng, (width, c_in, 3, 3), c_in * 9))
            params.add(f"{name}/b", np.zeros(width, dtype=np.float32))
            c_in = width
        params.add(f"{prefix}/side{s}/w", T.kaiming_uniform(rng, (1, width, 1, 1), width))


def init_warp_identity(params, cfg, prefix, in_channels, gain):
    """Route the mask channel through channel 0 of every stage-1 conv (ReLU
    passes values in [0, 1] unchanged) into the first side output."""
    convs = cfg.blocks[0][0]
    for j in range(1, convs + 1):
        w = params[f"{prefix}/s1_c{j}/w"].data
        src = in_channels - 1 if j == 1 else 0
        w[0] = 0.0
        w[0, src, 1, 1] = 1.0
        params[f"{prefix}/s1_c{j}/b"].data[0] = 0.0
    side = params[f"{prefix}/side1/w"].data
    side[0, 0] = gain


def init_segnet(rng, cfg=None, prefix="seg"):
    """Fresh parameters for both streams plus the stream combination."""
    cfg = cfg or SegNetConfig()
    params = T.ParamStore()
    init_stream(params, rng, cfg, f"{prefix}/{APPEARANCE}", cfg.appearance_channels)
    init_stream(params, rng, cfg, f"{prefix}/{FLOW}", cfg.flow_channels)
    params.add(f"{prefix}/mix/w", np.array([0.5, 0.5], dtype=np.float32).reshape(1, 2, 1, 1))
    params.add(f"{prefix}/mix/b", np.zeros(1, dtype=np.float32))
    if cfg.warp_gain > 0:
        init_warp_identity(params, cfg, f"{prefix}/{APPEARANCE}", cfg.appearance_channels, cfg.warp_gain)
        # mask 0.5 sits on the decision boundary
        params[f"{prefix}/mix/b"].data[0] = -0.25 * cfg.warp_gain
    return params


def forward_stream(x, params, cfg, prefix):
    """Run one stream on an NCHW input.

    Returns ``(side, deepest)``: the 1-channel hypercolumn response at input
    resolution and the last conv activation of the deepest stage.
    """
    x = T.as_tensor(x)
    size = x.shape[-2:]
    side = None
    h = x
    for s, (convs, _) in enumerate(cfg.blocks, start=1):
        if s > 1:
            h = T.max_pool_2x2(h)
        for j in range(1, convs + 1):
            name = f"{prefix}/s{s}_c{j}"
            h = T.relu(T.conv2d(h, params[f"{name}/w"], params[f"{name}/b"], stride=1, pad=1))
        r = T.conv2d(h, params[f"{prefix}/side{s}/w"])
        if r.shape[-2:] != size:
            r = T.bilinear_upsample(r, size)
        side = r if side is None else T.add(side, r)
    return side, h


@dataclass
class SegOutput:
    logits: T.Tensor
    prob: T.Tensor
    deepest: T.Tensor
    pad: tuple = (0, 0)


def pad_amount(h, w, multiple):
    return (-h) % multiple, (-w) % multiple


def forward_seg(appearance, flow, params, cfg, prefix="seg", use_flow=True):
    """Probability map from the two stream inputs (each 1 x C x H x W).

    Inputs whose size is not a multiple of the total stride are zero padded
    at the bottom/right and the response cropped back.  With
    ``use_flow=False`` the flow stream is skipped and contributes an exact
    zero channel to the mix.
    """
    appearance = T.as_tensor(appearance)
    if appearance.shape[1] != cfg.appearance_channels:
        raise T.ShapeError(
            f"forward_seg: appearance dimension 1 must be {cfg.appearance_channels}, got {appearance.shape[1]}"
        )
    h, w = appearance.shape[-2:]
    ph, pw = pad_amount(h, w, cfg.total_stride)
    if ph or pw:
        appearance = T.pad2d(appearance, (0, ph, 0, pw))
    side_a, deepest = forward_stream(appearance, params, cfg, f"{prefix}/{APPEARANCE}")
    if use_flow:
        flow = T.as_tensor(flow)
        if flow.shape[1] != cfg.flow_channels:
            raise T.ShapeError(f"forward_seg: flow dimension 1 must be {cfg.flow_channels}, got {flow.shape[1]}")
        if flow.shape[-2:] != (h, w):
            raise T.ShapeError(f"forward_seg: flow input {flow.shape[-2:]} != appearance input {(h, w)}")
        if ph or pw:
            flow = T.pad2d(flow, (0, ph, 0, pw))
        side_f, _ = forward_stream(flow, params, cfg, f"{prefix}/{FLOW}")
    else:
        side_f = T.Tensor(np.zeros(side_a.shape, dtype=side_a.dtype))
    logits = T.conv2d(T.concat([side_a, side_f], axis=1), params[f"{prefix}/mix/w"], params[f"{prefix}/mix/b"])
    if ph or pw:
        logits = T.crop2d(logits, 0, 0, h, w)
    return SegOutput(logits=logits, prob=T.sigmoid(logits), deepest=deepest, pad=(ph, pw))


def seg_loss(pred, gt):
    """Class-balanced BCE between a probability map and a binary mask."""
    return T.weighted_bce_loss(pred, gt)


def stream_inputs(frame, warped_mask, flow_mag_prev, flow_mag_next, dtype=np.float32):
    """Assemble NCHW stream inputs from H x W x 3 frame and H x W maps."""
    frame = np.asarray(frame, dtype=dtype)
    m = np.asarray(warped_mask, dtype=dtype)
    app = np.concatenate([frame.transpose(2, 0, 1), m[None]], axis=0)[None]
    flo = np.stack([np.asarray(flow_mag_prev, dtype=dtype), np.asarray(flow_mag_next, dtype=dtype), m])[None]
    return app, flo


def stream_parameter_names(params, prefix="seg", use_flow=True):
    """Names of the segmentation parameters that take part in a forward pass."""
    names = [n for n in params.names() if n.startswith(f"{prefix}/{APPEARANCE}/") or n.startswith(f"{prefix}/mix/")]
    if use_flow:
        names += [n for n in params.names() if n.startswith(f"{prefix}/{FLOW}/")]
    return sorted(names)
