"""Parametric synthetic scenes: textured rigid objects over a textured
background, with exact per-pixel ownership and motion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from matplotlib.path import Path as MplPath
from scipy import ndimage

SHAPES = ("disk", "rectangle", "polygon")
TEXTURE_SIZE = 160


@dataclass
class SceneObject:
    shape: str
    size: tuple  # disk: (r,), rectangle: (half_w, half_h), polygon: flat (x0, y0, x1, y1, ...)
    color: tuple
    texture_seed: int
    start: tuple  # centre (x, y) at frame 0
    velocity: tuple = (0.0, 0.0)  # px / frame
    angle: float = 0.0  # deg at frame 0
    spin: float = 0.0  # deg / frame
    depth: int = 0  # larger is closer to the camera
    annotated: bool = True

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}")
        self.size = tuple(float(v) for v in self.size)
        self.color = tuple(float(v) for v in self.color)
        self.start = tuple(float(v) for v in self.start)
        self.velocity = tuple(float(v) for v in self.velocity)

    def pose(self, t):
        cx = self.start[0] + self.velocity[0] * t
        cy = self.start[1] + self.velocity[1] * t
        return cx, cy, self.angle + self.spin * t

    def to_local(self, xs, ys, t):
        cx, cy, ang = self.pose(t)
        a = math.radians(ang)
        dx, dy = xs - cx, ys - cy
        return math.cos(a) * dx + math.sin(a) * dy, -math.sin(a) * dx + math.cos(a) * dy

    def to_world(self, ux, uy, t):
        cx, cy, ang = self.pose(t)
        a = math.radians(ang)
        return cx + math.cos(a) * ux - math.sin(a) * uy, cy + math.sin(a) * ux + math.cos(a) * uy

    def contains_local(self, ux, uy):
        if self.shape == "disk":
            return ux**2 + uy**2 <= self.size[0] ** 2
        if self.shape == "rectangle":
            return (np.abs(ux) <= self.size[0]) & (np.abs(uy) <= self.size[1])
        verts = np.asarray(self.size).reshape(-1, 2)
        pts = np.stack([np.ravel(ux), np.ravel(uy)], axis=1)
        return MplPath(verts).contains_points(pts).reshape(np.shape(ux))

    def radius(self):
        if self.shape == "disk":
            return self.size[0]
        if self.shape == "rectangle":
            return math.hypot(*self.size)
        return float(np.max(np.hypot(*np.asarray(self.size).reshape(-1, 2).T)))


@dataclass
class SynthScene:
    width: int = 64
    height: int = 64
    frames: int = 12
    background_seed: int = 0
    background_velocity: tuple = (0.0, 0.0)
    objects: list = field(default_factory=list)

    def __post_init__(self):
        self.objects = [o if isinstance(o, SceneObject) else SceneObject(**o) for o in self.objects]
        self.background_velocity = tuple(float(v) for v in self.background_velocity)
        if self.frames < 2:
            raise ValueError("SynthScene needs at least 2 frames")
        if not any(o.annotated for o in self.objects):
            raise ValueError("SynthScene needs at least one annotated object")

    @property
    def n_objects(self):
        return sum(1 for o in self.objects if o.annotated)

    def label_of(self, index):
        """Instance id of ``objects[index]`` (0 for unannotated distractors)."""
        obj = self.objects[index]
        if not obj.annotated:
            return 0
        return 1 + sum(1 for o in self.objects[:index] if o.annotated)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _grid(scene):
    ys, xs = np.mgrid[0 : scene.height, 0 : scene.width].astype(np.float64)
    return xs, ys


def ownership(scene, t):
    """Index into ``scene.objects`` of the visible object per pixel (-1 for
    background), honouring depth order."""
    xs, ys = _grid(scene)
    owner = np.full((scene.height, scene.width), -1, dtype=np.int64)
    order = sorted(range(len(scene.objects)), key=lambda i: (scene.objects[i].depth, i))
    for i in order:
        obj = scene.objects[i]
        ux, uy = obj.to_local(xs, ys, t)
        owner[obj.contains_local(ux, uy)] = i
    return owner


def inside_fraction(obj, scene, t, samples=48):
    """Fraction of an object's area lying inside the canvas at frame t."""
    r = obj.radius()
    g = np.linspace(-r, r, samples)
    ux, uy = np.meshgrid(g, g)
    inside = obj.contains_local(ux, uy)
    if not np.any(inside):
        return 0.0
    wx, wy = obj.to_world(ux[inside], uy[inside], t)
    ok = (wx >= -0.5) & (wx < scene.width - 0.5) & (wy >= -0.5) & (wy < scene.height - 0.5)
    return float(np.mean(ok))


def validate(scene):
    for i, obj in enumerate(scene.objects):
        for t in range(scene.frames):
            if inside_fraction(obj, scene, t) < 0.5:
                raise ValueError(f"object {i} is less than 50% inside the canvas at frame {t}")


def value_noise(rng, size=TEXTURE_SIZE, cells=(5, 10, 20, 40)):
    """Sum of bilinearly-upsampled random lattices, normalised to [0, 1]."""
    acc = np.zeros((size, size))
    for k, n in enumerate(cells):
        lattice = rng.random((n + 1, n + 1))
        coords = np.linspace(0, n, size)
        yy, xx = np.meshgrid(coords, coords, indexing="ij")
        acc += ndimage.map_coordinates(lattice, [yy, xx], order=1) * 0.6**k
    acc -= acc.min()
    return acc / max(acc.max(), 1e-12)


def sample_texture(tex, ux, uy):
    c = tex.shape[0] / 2.0
    return ndimage.map_coordinates(tex, [uy + c, ux + c], order=1, mode="wrap")


def render(scene, seed=0):
    """Frames (T x H x W x 3 float32 in [0, 1]), label masks (T x H x W
    uint8) and ownership maps for every frame."""
    rng = np.random.default_rng([seed, scene.background_seed])
    bg_tex = value_noise(rng)
    bg_tint = 0.55 + 0.35 * rng.random(3)
    obj_tex = [value_noise(np.random.default_rng([seed, o.texture_seed, 7])) for o in scene.objects]
    labels = [scene.label_of(i) for i in range(len(scene.objects))]
    xs, ys = _grid(scene)
    frames, masks, owners = [], [], []
    for t in range(scene.frames):
        owner = ownership(scene, t)
        bx = xs - scene.background_velocity[0] * t - scene.width / 2
        by = ys - scene.background_velocity[1] * t - scene.height / 2
        bg = sample_texture(bg_tex, bx, by)
        img = (0.2 + 0.6 * bg)[..., None] * bg_tint
        mask = np.zeros((scene.height, scene.width), dtype=np.uint8)
        for i, obj in enumerate(scene.objects):
            sel = owner == i
            if not np.any(sel):
                continue
            ux, uy = obj.to_local(xs[sel], ys[sel], t)
            v = sample_texture(obj_tex[i], ux, uy)
            img[sel] = (0.25 + 0.75 * v)[:, None] * np.asarray(obj.color)
            mask[sel] = labels[i]
        frames.append(np.clip(img, 0, 1).astype(np.float32))
        masks.append(mask)
        owners.append(owner)
    return frames, masks, owners


def exact_flow(scene, t, target, owner=None):
    """Displacement from frame ``t`` to frame ``target`` of every pixel's
    visible surface point.

    Background points hidden by an object in ``target`` have no
    correspondence; they take the motion of that occluding object, which
    keeps backward-warped masks from trailing behind moving objects.
    """
    xs, ys = _grid(scene)
    if owner is None:
        owner = ownership(scene, t)
    dt = target - t
    flow = np.zeros((scene.height, scene.width, 2), dtype=np.float64)
    flow[..., 0] = scene.background_velocity[0] * dt
    flow[..., 1] = scene.background_velocity[1] * dt

    def rigid(i, sel):
        obj = scene.objects[i]
        ux, uy = obj.to_local(xs[sel], ys[sel], t)
        wx, wy = obj.to_world(ux, uy, target)
        flow[sel, 0] = wx - xs[sel]
        flow[sel, 1] = wy - ys[sel]

    bg = owner < 0
    if np.any(bg):
        owner_target = ownership(scene, target)
        tx = np.rint(xs + flow[..., 0]).astype(np.int64)
        ty = np.rint(ys + flow[..., 1]).astype(np.int64)
        ok = (tx >= 0) & (tx < scene.width) & (ty >= 0) & (ty < scene.height)
        hidden_by = np.full(owner.shape, -1, dtype=np.int64)
        hidden_by[ok] = owner_target[ty[ok], tx[ok]]
        for i in range(len(scene.objects)):
            sel = bg & (hidden_by == i)
            if np.any(sel):
                rigid(i, sel)
    for i in range(len(scene.objects)):
        sel = owner == i
        if np.any(sel):
            rigid(i, sel)
    return flow.astype(np.float32)


PALETTE_COLORS = (
    (0.95, 0.25, 0.2),
    (0.2, 0.8, 0.3),
    (0.25, 0.4, 0.95),
    (0.95, 0.85, 0.2),
    (0.85, 0.3, 0.9),
    (0.2, 0.9, 0.9),
)


def random_scene(
    rng,
    width=64,
    height=64,
    frames=12,
    n_objects=1,
    max_speed=3.0,
    max_spin=3.0,
    translation_only=False,
    distractors=0,
    shapes=SHAPES,
):
    """Random scene whose objects stay fully inside the canvas."""
    objs = []
    # object sizes are set for a 64 px canvas
    unit = min(width, height) / 64.0
    for k in range(n_objects + distractors):
        annotated = k < n_objects
        shape = shapes[int(rng.integers(len(shapes)))]
        if shape == "disk":
            size = (float(rng.uniform(7, 12)) * unit,)
        elif shape == "rectangle":
            size = (float(rng.uniform(6, 12)) * unit, float(rng.uniform(6, 12)) * unit)
        else:
            n = int(rng.integers(5, 8))
            ang = np.sort(rng.uniform(0, 2 * np.pi, n))
            rad = rng.uniform(7, 13, n) * unit
            size = tuple(np.stack([rad * np.cos(ang), rad * np.sin(ang)], 1).ravel().tolist())
        if annotated:
            color = PALETTE_COLORS[k % len(PALETTE_COLORS)]
            tex_seed = int(rng.integers(1 << 30))
        else:
            # distractors copy the look of the first object
            color = objs[0].color
            tex_seed = objs[0].texture_seed
        proto = SceneObject(shape, size, color, tex_seed, (0, 0))
        r = proto.radius()
        for _ in range(200):
            speed = rng.uniform(0.5, max_speed)
            heading = rng.uniform(0, 2 * np.pi)
            vel = (speed * math.cos(heading), speed * math.sin(heading))
            lo_x, hi_x = min(r, (width - 1) / 2), max(width - 1 - r, (width - 1) / 2)
            lo_y, hi_y = min(r, (height - 1) / 2), max(height - 1 - r, (height - 1) / 2)
            sx = rng.uniform(lo_x, hi_x)
            sy = rng.uniform(lo_y, hi_y)
            ex, ey = sx + vel[0] * (frames - 1), sy + vel[1] * (frames - 1)
            if lo_x <= ex <= hi_x and lo_y <= ey <= hi_y:
                break
        else:
            vel, ex, ey = (0.0, 0.0), sx, sy
        spin = 0.0 if translation_only else float(rng.uniform(-max_spin, max_spin))
        objs.append(
            SceneObject(
                shape,
                size,
                color,
                tex_seed,
                (float(sx), float(sy)),
                vel,
                float(rng.uniform(0, 360)) if not translation_only else 0.0,
                spin,
                depth=k if annotated else -(k + 1),
                annotated=annotated,
            )
        )
    scene = SynthScene(width, height, frames, int(rng.integers(1 << 30)), (0.0, 0.0), objs)
    validate(scene)
    return scene
