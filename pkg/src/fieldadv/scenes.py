"""Analytic shapes, color patterns, and the synthetic multi-view generator.

Images are sphere-traced straight from signed distance functions, so the
reconstruction target never depends on the rasterizer.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .camera import Camera, look_at, orbit_eye
from .reconstruct import MultiViewDataset, save_dataset

SHAPE_CLASSES = ("sphere", "cube", "torus", "cone", "cylinder", "capsule")
PATTERNS = ("solid", "stripes", "checker")


def _len2(x, y):
    return np.sqrt(x * x + y * y)


def sdf_sphere(p, size):
    return np.linalg.norm(p, axis=-1) - 0.5 * size


def sdf_cube(p, size):
    q = np.abs(p) - 0.4 * size
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    return outside + np.minimum(q.max(axis=-1), 0.0)


def sdf_torus(p, size):
    big, small = 0.45 * size, 0.18 * size
    qx = _len2(p[..., 0], p[..., 2]) - big
    return _len2(qx, p[..., 1]) - small


def sdf_cylinder(p, size):
    r, h = 0.33 * size, 0.45 * size
    dx = _len2(p[..., 0], p[..., 2]) - r
    dy = np.abs(p[..., 1]) - h
    return np.minimum(np.maximum(dx, dy), 0.0) + _len2(np.maximum(dx, 0.0), np.maximum(dy, 0.0))


def sdf_capsule(p, size):
    r, h = 0.26 * size, 0.32 * size
    y = p[..., 1] - np.clip(p[..., 1], -h, h)
    return np.sqrt(p[..., 0] ** 2 + y ** 2 + p[..., 2] ** 2) - r


def sdf_cone(p, size):
    # capped cone, apex up; half height h, base radius r1, tip radius r2
    h, r1, r2 = 0.42 * size, 0.48 * size, 0.0
    qx, qy = _len2(p[..., 0], p[..., 2]), p[..., 1]
    k1 = np.array([r2, h])
    k2 = np.array([r2 - r1, 2.0 * h])
    cax = qx - np.minimum(qx, np.where(qy < 0.0, r1, r2))
    cay = np.abs(qy) - h
    t = np.clip(((k1[0] - qx) * k2[0] + (k1[1] - qy) * k2[1]) / (k2 @ k2), 0.0, 1.0)
    cbx = qx - k1[0] + k2[0] * t
    cby = qy - k1[1] + k2[1] * t
    s = np.where((cbx < 0.0) & (cay < 0.0), -1.0, 1.0)
    return s * np.sqrt(np.minimum(cax ** 2 + cay ** 2, cbx ** 2 + cby ** 2))


SDFS = {
    "sphere": sdf_sphere, "cube": sdf_cube, "torus": sdf_torus,
    "cone": sdf_cone, "cylinder": sdf_cylinder, "capsule": sdf_capsule,
}


@dataclass
class Pattern:
    kind: str = "solid"
    color_a: tuple = (0.85, 0.2, 0.2)
    color_b: tuple = (0.2, 0.3, 0.85)
    frequency: float = 3.0
    axis: tuple = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if self.kind not in PATTERNS:
            raise ValueError(f"unknown pattern {self.kind!r}")

    def __call__(self, p: np.ndarray) -> np.ndarray:
        a, b = np.asarray(self.color_a, dtype=np.float64), np.asarray(self.color_b, dtype=np.float64)
        if self.kind == "solid":
            return np.broadcast_to(a, p.shape).copy()
        if self.kind == "stripes":
            ax = np.asarray(self.axis, dtype=np.float64)
            sel = np.floor(p @ (ax / np.linalg.norm(ax)) * self.frequency).astype(np.int64) % 2
        else:
            sel = np.floor(p * self.frequency).astype(np.int64).sum(axis=-1) % 2
        return np.where(sel[..., None] == 0, a, b)


@dataclass
class Primitive:
    shape: str
    size: float = 1.0
    offset: tuple = (0.0, 0.0, 0.0)
    pattern: Pattern = field(default_factory=Pattern)

    def sdf(self, p):
        return SDFS[self.shape](p - np.asarray(self.offset), self.size)


@dataclass
class SceneSpec:
    """A scene of one or more analytic primitives plus the capture rig."""

    primitives: list
    n_views: int = 32
    resolution: int = 64
    fov: float = float(np.deg2rad(60.0))
    distance: float = 2.6
    elevation_range: tuple = (-30.0, 75.0)

    def __post_init__(self):
        for pr in self.primitives:
            if pr.shape not in SDFS:
                raise ValueError(f"unknown shape {pr.shape!r}")

    def sdf(self, p):
        return np.min(np.stack([pr.sdf(p) for pr in self.primitives]), axis=0)

    def color(self, p):
        d = np.stack([pr.sdf(p) for pr in self.primitives])
        which = d.argmin(axis=0)
        out = np.zeros(p.shape)
        for i, pr in enumerate(self.primitives):
            m = which == i
            if m.any():
                out[m] = pr.pattern(p[m] - np.asarray(pr.offset))
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def single_object(shape: str, pattern: Pattern | None = None, size: float = 1.0, **rig) -> SceneSpec:
    return SceneSpec([Primitive(shape, size, (0.0, 0.0, 0.0), pattern or Pattern())], **rig)


def sphere_and_cube(**rig) -> SceneSpec:
    """The reference reconstruction scene: a solid sphere beside a striped cube."""
    return SceneSpec([
        Primitive("sphere", 0.9, (-0.33, 0.0, 0.0), Pattern("solid", (0.85, 0.25, 0.2))),
        Primitive("cube", 0.75, (0.36, 0.0, 0.05), Pattern("stripes", (0.2, 0.45, 0.85), (0.95, 0.8, 0.2), 2.5)),
    ], **rig)


def raytrace(spec: SceneSpec, camera: Camera, background: float = 1.0, max_iter: int = 256) -> np.ndarray:
    """Sphere-trace the analytic scene at pixel centers."""
    dirs = camera.pixel_directions().reshape(-1, 3)
    o = camera.position
    t = np.zeros(dirs.shape[0])
    active = np.ones(dirs.shape[0], dtype=bool)
    hit = np.zeros(dirs.shape[0], dtype=bool)
    far = np.linalg.norm(o) + 3.0
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        p = o + t[idx, None] * dirs[idx]
        d = spec.sdf(p)
        done = d < 1e-7
        hit[idx[done]] = True
        t[idx] += np.where(done, 0.0, d)
        gone = t[idx] > far
        active[idx[done | gone]] = False
    img = np.full((dirs.shape[0], 3), background, dtype=np.float64)
    if hit.any():
        img[hit] = spec.color(o + t[hit, None] * dirs[hit])
    return img.reshape(camera.height, camera.width, 3)


def rig_cameras(spec: SceneSpec, seed: int) -> list[Camera]:
    """Views on a sphere: stratified elevations, golden-angle azimuths with a seeded offset."""
    rng = np.random.default_rng(seed)
    lo, hi = np.deg2rad(spec.elevation_range[0]), np.deg2rad(spec.elevation_range[1])
    az0 = rng.uniform(0, 2 * np.pi)
    cams = []
    for i in range(spec.n_views):
        el = lo + (hi - lo) * (i + rng.uniform(0.25, 0.75)) / spec.n_views
        az = az0 + i * np.pi * (3.0 - np.sqrt(5.0))
        eye = orbit_eye(az, el, spec.distance)
        cams.append(Camera(look_at(eye, (0.0, 0.0, 0.0)), spec.fov, spec.resolution, spec.resolution))
    order = rng.permutation(spec.n_views)
    return [cams[i] for i in order]


def make_dataset(spec: SceneSpec, out_dir=None, seed: int = 0, fmt: str = "ppm") -> MultiViewDataset:
    """Render ``spec.n_views`` frames; write them plus ``dataset.json`` if ``out_dir`` is given."""
    frames = [(cam, raytrace(spec, cam)) for cam in rig_cameras(spec, seed)]
    ds = MultiViewDataset(frames)
    if out_dir is not None:
        save_dataset(ds, out_dir, fmt)
    return ds
