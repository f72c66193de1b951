"""Volume rendering of a radiance field and photometric fitting to images."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gradtape as gt
from .camera import Camera
from .fields import FieldConfig, RadianceField
from .fileio import read_image, write_image
from .optim import Adam

log = logging.getLogger(__name__)

BACKGROUND = 1.0  # white
N_SAMPLES = 64


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if not self.near < self.far:
            raise ValueError("ray needs near < far")


@dataclass
class MultiViewDataset:
    frames: list  # [(Camera, image HxWx3)]

    def __post_init__(self):
        if len(self.frames) < 2:
            raise ValueError("dataset needs at least two frames")
        shapes = {img.shape for _, img in self.frames}
        if len(shapes) != 1:
            raise ValueError(f"images differ in resolution: {sorted(shapes)}")

    @property
    def resolution(self) -> tuple[int, int]:
        h, w = self.frames[0][1].shape[:2]
        return w, h


def ray_for_pixel(camera: Camera, px: int, py: int, near: float = 1e-3, far: float = 100.0) -> Ray:
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise ValueError(f"pixel ({px}, {py}) outside {camera.width}x{camera.height} image")
    f = camera.focal
    d = np.array([(px + 0.5 - 0.5 * camera.width) / f, -(py + 0.5 - 0.5 * camera.height) / f, -1.0])
    d = camera.c2w[:3, :3] @ (d / np.linalg.norm(d))
    return Ray(camera.position, d / np.linalg.norm(d), near, far)


def intersect_box(origins, dirs, lo, hi):
    """Slab test. Returns (near, far, hit) per ray, near clamped at 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (lo - origins) * inv
        t1 = (hi - origins) * inv
    tmin = np.nanmax(np.minimum(t0, t1), axis=1)
    tmax = np.nanmin(np.maximum(t0, t1), axis=1)
    tmin = np.maximum(tmin, 0.0)
    hit = tmax > tmin
    return tmin, tmax, hit


def composite(sigma: gt.Tensor, color: gt.Tensor, delta: np.ndarray, background: float = BACKGROUND):
    """Alpha compositing along the sample axis.

    sigma [R,S], color [R,S,3], delta [R] (uniform spacing per ray).
    Returns (rgb [R,3], opacity [R], weights [R,S]).
    """
    R, S = sigma.shape
    tau = sigma * np.repeat(delta[:, None], S, axis=1)
    alpha = 1.0 - gt.exp(-tau)
    trans = gt.exp(-gt.cumsum(tau, axis=1, exclusive=True))
    w = trans * alpha
    opacity = gt.sum(w, axis=1)
    w3 = gt.broadcast_to(gt.reshape(w, (R, S, 1)), (R, S, 3))
    rgb = gt.sum(w3 * color, axis=1)
    bgterm = gt.broadcast_to(gt.reshape((1.0 - opacity) * background, (R, 1)), (R, 3))
    return rgb + bgterm, opacity, w


def sample_points(origins, dirs, near, far, n_samples, rng=None):
    """Stratified samples: one per equal bin, jittered if ``rng`` is given, else bin midpoints."""
    R = origins.shape[0]
    width = (far - near) / n_samples
    off = rng.random((R, n_samples)) if rng is not None else np.full((R, n_samples), 0.5)
    t = near[:, None] + (np.arange(n_samples)[None, :] + off) * width[:, None]
    pts = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    return pts, width


def render_rays(field: RadianceField, bound: dict, origins, dirs, n_samples: int = N_SAMPLES,
                rng=None, background: float = BACKGROUND):
    """Render rays on the tape of ``bound``. Rays missing the box return the background.

    Returns (rgb Tensor [R,3], opacity Tensor [R]).
    """
    lo, hi = field.bbox
    near, far, hit = intersect_box(origins, dirs, lo, hi)
    tape = next(iter(bound.values())).tape
    R = origins.shape[0]
    hit_idx = np.nonzero(hit)[0]
    if hit_idx.size == 0:
        return tape.const(np.full((R, 3), background)), tape.const(np.zeros(R))
    pts, width = sample_points(origins[hit_idx], dirs[hit_idx], near[hit_idx], far[hit_idx], n_samples, rng)
    Rh = hit_idx.size
    flat = np.clip(pts.reshape(-1, 3), lo, hi)
    sigma = gt.reshape(field.density(flat, bound), (Rh, n_samples))
    color = gt.reshape(field.color(flat, bound), (Rh, n_samples, 3))
    rgb_h, op_h, _ = composite(sigma, color, width, background)
    if Rh == R:
        return rgb_h, op_h
    # scatter hit rays into the full batch; misses stay background
    miss = np.ones(R)
    miss[hit_idx] = 0.0
    rgb = gt.scatter_add(rgb_h, hit_idx, R) + np.repeat(miss[:, None], 3, axis=1) * background
    op = gt.scatter_add(op_h, hit_idx, R)
    return rgb, op


def volume_render(field: RadianceField, ray: Ray, n_samples: int = N_SAMPLES, rng=None,
                  background: float = BACKGROUND):
    """Single-ray convenience wrapper over the ray's own [near, far]."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    tape = gt.Tape()
    bound = field.bind(tape)
    o, d = ray.origin[None], ray.direction[None]
    pts, width = sample_points(o, d, np.array([ray.near]), np.array([ray.far]), n_samples, rng)
    flat = pts.reshape(-1, 3)
    sigma = gt.reshape(field.density(flat, bound), (1, n_samples))
    color = gt.reshape(field.color(flat, bound), (1, n_samples, 3))
    rgb, op, _ = composite(sigma, color, width, background)
    return rgb.value[0], float(op.value[0])


def render_image(field: RadianceField, camera: Camera, n_samples: int = N_SAMPLES, chunk: int = 4096):
    dirs = camera.pixel_directions().reshape(-1, 3)
    origins = np.broadcast_to(camera.position, dirs.shape).copy()
    out = np.empty((dirs.shape[0], 3))
    for s in range(0, dirs.shape[0], chunk):
        tape = gt.Tape()
        rgb, _ = render_rays(field, field.bind(tape), origins[s:s + chunk], dirs[s:s + chunk], n_samples)
        out[s:s + chunk] = rgb.value
        tape.release()
    return out.reshape(camera.height, camera.width, 3)


def psnr(a, b) -> float:
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    return 99.0 if mse < 1e-10 else 10.0 * np.log10(1.0 / mse)


def default_lrs(field: RadianceField, grid_lr: float = 1e-2, mlp_lr: float = 1e-3) -> dict:
    return {k: (grid_lr if k.endswith(".grid") else mlp_lr) for k in field.params}


def train_field(dataset: MultiViewDataset, epochs: int, lr: float | None = None, rays_per_step: int = 1024,
                seed: int = 0, n_samples: int = N_SAMPLES, config: FieldConfig | None = None,
                max_steps: int | None = None, callback=None):
    """Fit a field to all frames but the last; report PSNR on the last frame.

    One epoch is one shuffled pass over every training ray. ``lr`` sets the
    grid learning rate (MLPs use a tenth of it); default 1e-2.
    Returns (field, held_out_psnr).
    """
    rng = np.random.default_rng(seed)
    field = RadianceField(config, seed=seed)
    grid_lr = 1e-2 if lr is None else float(lr)
    opt = Adam(field.params, default_lrs(field, grid_lr, grid_lr / 10.0))
    train = dataset.frames[:-1]
    origins, dirs, colors = [], [], []
    for cam, img in train:
        d = cam.pixel_directions().reshape(-1, 3)
        dirs.append(d)
        origins.append(np.broadcast_to(cam.position, d.shape))
        colors.append(img.reshape(-1, 3))
    origins = np.concatenate(origins)
    dirs = np.concatenate(dirs)
    colors = np.concatenate(colors)
    n_rays = origins.shape[0]
    step = 0
    for epoch in range(epochs):
        perm = rng.permutation(n_rays)
        for s in range(0, n_rays, rays_per_step):
            if max_steps is not None and step >= max_steps:
                break
            b = perm[s:s + rays_per_step]
            tape = gt.Tape()
            bound = field.bind(tape, field.params.keys())
            rgb, _ = render_rays(field, bound, origins[b], dirs[b], n_samples, rng)
            loss = gt.mean((rgb - colors[b]) ** 2)
            lv = float(loss.value)
            if not np.isfinite(lv):
                raise RuntimeError(f"non-finite photometric loss at epoch {epoch}, step {step}")
            grads = tape.backward(loss)
            opt.step({k: grads[t.node_id] for k, t in bound.items()})
            tape.release()
            step += 1
            if callback is not None:
                callback(step, lv)
    cam, img = dataset.frames[-1]
    held = psnr(render_image(field, cam, n_samples), img)
    log.info("held-out PSNR %.2f dB after %d steps", held, step)
    return field, held


# ---------------------------------------------------------------------------
# dataset descriptor

def save_dataset(dataset: MultiViewDataset, out_dir, fmt: str = "ppm") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fovs = {round(cam.fov, 15) for cam, _ in dataset.frames}
    if len(fovs) != 1:
        raise ValueError("dataset descriptor stores a single fov")
    frames = []
    for i, (cam, img) in enumerate(dataset.frames):
        name = f"frame_{i:03d}.{fmt}"
        write_image(out / name, img)
        frames.append({"file": name, "transform": [float(v) for v in cam.c2w.reshape(-1)]})
    doc = {"fov": float(dataset.frames[0][0].fov), "frames": frames}
    path = out / "dataset.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def load_dataset(path) -> MultiViewDataset:
    path = Path(path)
    if path.is_dir():
        path = path / "dataset.json"
    doc = json.loads(path.read_text())
    frames = []
    for fr in doc["frames"]:
        img = read_image(path.parent / fr["file"])
        h, w = img.shape[:2]
        cam = Camera(np.array(fr["transform"], dtype=np.float64).reshape(4, 4), float(doc["fov"]), w, h)
        frames.append((cam, img))
    return MultiViewDataset(frames)
