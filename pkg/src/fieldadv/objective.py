"""Attack losses, naturalness regularizers and EOT view/transform sampling."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import gradtape as gt
from . import imageops
from .camera import Camera, look_at, orbit_eye
from .meshing import MeshStats
from .rasterizer import RenderSettings, rasterize

MODES = ("mesh_based", "mlp_only", "grid_only", "mlp_grid")
GEOMETRY = ("tex", "tex_geo")


# ---------------------------------------------------------------------------
# viewpoints

@dataclass
class ViewSampler:
    """Random cameras on a shell around an object, looking at its center.

    ``radius`` is the object's bounding radius (half the bbox diagonal);
    camera distance is drawn from ``radius_range`` times that.
    """

    center: tuple = (0.0, 0.0, 0.0)
    radius: float = 1.0
    elevation_range: tuple = (-30.0, 75.0)  # degrees
    radius_range: tuple = (1.8, 2.4)
    fov: float = math.radians(70.0)
    resolution: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("object radius must be positive")
        # whole bounding sphere inside the (square) frustum at the nearest distance
        if math.sin(0.5 * self.fov) * self.radius_range[0] < 1.0 - 1e-12:
            raise ValueError("fov too narrow for the nearest camera distance")

    @classmethod
    def for_mesh(cls, V: np.ndarray, **kw) -> "ViewSampler":
        lo, hi = V.min(axis=0), V.max(axis=0)
        return cls(center=tuple(0.5 * (lo + hi)), radius=float(0.5 * np.linalg.norm(hi - lo)), **kw)

    def rng(self, offset: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, offset])

    def sample(self, rng: np.random.Generator) -> Camera:
        az = rng.uniform(0.0, 2.0 * np.pi)
        lo, hi = np.deg2rad(self.elevation_range)
        el = rng.uniform(lo, hi)
        dist = self.radius * rng.uniform(*self.radius_range)
        eye = orbit_eye(az, el, dist, self.center)
        return Camera(look_at(eye, self.center), self.fov, self.resolution, self.resolution)

    def sample_many(self, n: int, rng: np.random.Generator) -> list[Camera]:
        return [self.sample(rng) for _ in range(n)]


# ---------------------------------------------------------------------------
# EOT transformation sets

@dataclass
class TransformSample:
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0
    distance_scale: float = 1.0
    shift: tuple = (0.0, 0.0)  # look-at shift in camera right/up, units of object radius
    contrast: float = 1.0
    blur: int = 0

    @property
    def is_identity_3d(self) -> bool:
        return (self.yaw, self.pitch, self.roll, self.distance_scale, tuple(self.shift)) == (0.0, 0.0, 0.0, 1.0, (0.0, 0.0))

    def apply_3d(self, camera: Camera, center, radius: float) -> Camera:
        """Rotate/dolly/shift the camera about the object center."""
        if self.is_identity_3d:
            return camera
        c = np.asarray(center, dtype=np.float64)
        R = camera.rotation
        right, up, back = R[:, 0], R[:, 1], R[:, 2]
        rot = (_axis_rot(np.array([0.0, 1.0, 0.0]), self.yaw) @ _axis_rot(right, self.pitch)
               @ _axis_rot(back, self.roll))
        eye = c + self.distance_scale * (rot @ (camera.position - c))
        Rn = rot @ R
        off = radius * (self.shift[0] * Rn[:, 0] + self.shift[1] * Rn[:, 1])
        m = np.eye(4)
        m[:3, :3] = Rn
        m[:3, 3] = eye + off
        return Camera(m, camera.fov, camera.width, camera.height)

    def apply_2d(self, img: gt.Tensor) -> gt.Tensor:
        img = imageops.contrast(img, self.contrast)
        return imageops.gaussian_blur(img, self.blur)


def _axis_rot(axis, angle):
    if angle == 0.0:
        return np.eye(3)
    a = axis / np.linalg.norm(axis)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


@dataclass
class TransformSpec:
    """Sets Q (3-D: pose, distance, viewpoint shift) and T (2-D: contrast, blur).

    Continuous ranges are symmetric and contain zero / one, and the blur set
    always contains 0 (no blur), so the identity is always a member.
    """

    pose_jitter_deg: float = 10.0
    distance_jitter: float = 0.15
    shift: float = 0.1
    contrast_range: tuple = (0.7, 1.3)
    blur_kernels: tuple = (0, 3, 5)

    def __post_init__(self):
        lo, hi = self.contrast_range
        if not lo <= 1.0 <= hi:
            raise ValueError("contrast range must contain 1")
        if 0 not in tuple(self.blur_kernels):
            raise ValueError("blur set must contain 0 (no blur)")
        if any(k not in (0, 3, 5) for k in self.blur_kernels):
            raise ValueError("blur kernels must be drawn from {0, 3, 5}")

    @classmethod
    def identity(cls) -> "TransformSpec":
        return cls(0.0, 0.0, 0.0, (1.0, 1.0), (0,))

    def sample(self, rng: np.random.Generator) -> TransformSample:
        j = np.deg2rad(self.pose_jitter_deg)
        u = rng.uniform(-1.0, 1.0, size=6)
        lo, hi = self.contrast_range
        c = float(lo + (hi - lo) * rng.random())
        k = int(self.blur_kernels[rng.integers(len(self.blur_kernels))])
        return TransformSample(
            yaw=float(j * u[0]), pitch=float(j * u[1]), roll=float(j * u[2]),
            distance_scale=float(1.0 + self.distance_jitter * u[3]),
            shift=(float(self.shift * u[4]), float(self.shift * u[5])),
            contrast=c if lo != hi else float(lo), blur=k,
        )


# ---------------------------------------------------------------------------
# configuration

@dataclass
class AttackConfig:
    beta: float = 1e3
    lambdas: tuple = (1.0, 3000.0, 1e-3, 1e-2)  # rgb, cd, lap, edge
    epochs: int = 250
    n_views: int = 8
    target: int | None = None
    label: int | None = None
    mode: str = "mlp_grid"
    geometry: str = "tex_geo"
    lr_grid: float = 5e-3
    lr_mlp: float = 1e-3
    lr_offset: float = 1e-4
    lr_color: float = 1e-2
    rgb_reduction: str = "mean"
    smooth_reference: str = "offset"
    clamp_fraction: float = 0.05
    eot: TransformSpec = field(default_factory=TransformSpec)
    view_elevation: tuple = (-30.0, 75.0)
    view_radius: tuple = (1.8, 2.4)
    resolution: int = 64
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.eot, dict):
            self.eot = TransformSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in self.eot.items()})
        self.lambdas = tuple(float(v) for v in self.lambdas)
        self.view_elevation = tuple(self.view_elevation)
        self.view_radius = tuple(self.view_radius)
        self.validate()

    def validate(self) -> None:
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if len(self.lambdas) != 4 or any(v < 0 for v in self.lambdas):
            raise ValueError("lambdas must be four nonnegative weights")
        if self.epochs < 0 or self.n_views < 1:
            raise ValueError("epochs must be >= 0 and n_views >= 1")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.geometry not in GEOMETRY:
            raise ValueError(f"unknown geometry flag {self.geometry!r}; expected one of {GEOMETRY}")
        if self.rgb_reduction not in ("sum", "mean"):
            raise ValueError("rgb_reduction must be 'sum' or 'mean'")
        if self.smooth_reference not in ("offset", "absolute"):
            raise ValueError("smooth_reference must be 'offset' or 'absolute'")
        if self.target is not None and self.label is not None and self.target == self.label:
            raise ValueError("target label must differ from the clean label")

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d))

    def to_json(self, path=None) -> str:
        s = json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(s)
        return s

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "AttackConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_(self, **kw) -> "AttackConfig":
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# losses

def cross_entropy(logits: gt.Tensor, target: int) -> gt.Tensor:
    """``-log softmax(logits)[target]``; batched logits [B,K] give the batch mean."""
    K = logits.shape[-1]
    if K < 2:
        raise ValueError("need at least two classes")
    if not (0 <= int(target) < K):
        raise ValueError(f"target {target} out of range for {K} classes")
    ls = gt.log_softmax(logits, axis=-1)
    if logits.ndim == 1:
        return -ls[int(target)]
    return -gt.mean(ls[:, int(target)])


def _stack_images(images) -> gt.Tensor:
    if isinstance(images, gt.Tensor):
        return images
    if isinstance(images, np.ndarray):
        return gt.Tape().const(images)
    ims = list(images)
    tape = next((x.tape for x in ims if isinstance(x, gt.Tensor)), None)
    if tape is None:
        return gt.Tape().const(np.stack(ims))
    return gt.stack([x if isinstance(x, gt.Tensor) else tape.const(x) for x in ims])


def r_rgb(adv_images, clean_images, reduction: str = "sum") -> gt.Tensor:
    """Mean over views of the squared image distance.

    ``reduction='sum'`` sums over pixels and channels; ``'mean'`` averages
    them, which keeps the term on the scale of a per-pixel MSE.
    """
    a = _stack_images(adv_images)
    if isinstance(clean_images, gt.Tensor):
        c = clean_images.value
    elif isinstance(clean_images, np.ndarray):
        c = clean_images
    else:
        c = np.stack([x.value if isinstance(x, gt.Tensor) else x for x in clean_images])
    if a.shape != c.shape:
        raise gt.ShapeError("r_rgb", a.shape, c.shape)
    d = a - c
    N = a.shape[0]
    if reduction == "sum":
        return gt.sum(d * d) / float(N)
    if reduction == "mean":
        return gt.mean(d * d)
    raise ValueError("reduction must be 'sum' or 'mean'")


def _lift(tape, x):
    return x if isinstance(x, gt.Tensor) else tape.const(np.asarray(x, dtype=np.float64))


def r_cd(V_adv, V, tape: gt.Tape | None = None) -> gt.Tensor:
    """Symmetric squared Chamfer distance; differentiable in ``V_adv``.

    Nearest neighbors are found on the current values (a kd-tree query);
    the distances themselves are recomputed on the tape.
    """
    tape = tape or (V_adv.tape if isinstance(V_adv, gt.Tensor) else gt.Tape())
    A = _lift(tape, V_adv)
    B = np.asarray(V.value if isinstance(V, gt.Tensor) else V, dtype=np.float64)
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("Chamfer distance needs non-empty point sets")
    _, nn_ab = cKDTree(B).query(A.value)
    _, nn_ba = cKDTree(A.value).query(B)
    d1 = A - B[nn_ab]
    d2 = gt.gather(A, nn_ba) - B
    return gt.mean(gt.sum(d1 * d1, axis=1)) + gt.mean(gt.sum(d2 * d2, axis=1))


def laplacian(V, stats: MeshStats, tape: gt.Tape | None = None) -> gt.Tensor:
    """Uniform umbrella operator ``v_i - mean_{j in N(i)} v_j``; zero rows for isolated vertices."""
    tape = tape or (V.tape if isinstance(V, gt.Tensor) else gt.Tape())
    X = _lift(tape, V)
    n = X.shape[0]
    deg = stats.degree.astype(np.float64)
    if stats.nbr_idx.size == 0:
        return X * 0.0
    rows = np.repeat(np.arange(n), stats.degree)
    nsum = gt.scatter_add(gt.gather(X, stats.nbr_idx), rows, n)
    inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1.0), 0.0)
    has = np.repeat((deg > 0).astype(np.float64)[:, None], 3, axis=1)
    return X * has - nsum * np.repeat(inv[:, None], 3, axis=1)


def r_lap(V, stats: MeshStats, tape: gt.Tape | None = None) -> gt.Tensor:
    L = laplacian(V, stats, tape)
    return gt.sum(L * L) / float(L.shape[0])


def r_edge(V, edges: np.ndarray, tape: gt.Tape | None = None) -> gt.Tensor:
    tape = tape or (V.tape if isinstance(V, gt.Tensor) else gt.Tape())
    X = _lift(tape, V)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0] == 0:
        return tape.const(0.0)
    d = gt.gather(X, edges[:, 0]) - gt.gather(X, edges[:, 1])
    return gt.sum(d * d) / float(edges.shape[0])


def smoothness_terms(V_adv, V, stats: MeshStats, reference: str = "offset"):
    """(r_lap, r_edge) of the offset ``V_adv - V`` (default) or of ``V_adv`` itself."""
    tape = V_adv.tape if isinstance(V_adv, gt.Tensor) else gt.Tape()
    X = _lift(tape, V_adv)
    if reference == "offset":
        X = X - np.asarray(V, dtype=np.float64)
    return r_lap(X, stats), r_edge(X, stats.edges)


def total_regularizer(adv_images, clean_images, V_adv, V, stats: MeshStats,
                      lambdas=(1.0, 3000.0, 1e-3, 1e-2), rgb_reduction: str = "sum",
                      smooth_reference: str = "offset"):
    """``l1*R_rgb + l2*R_cd + l3*R_lap + l4*R_edge``. Returns (total, {term: Tensor})."""
    if any(l < 0 for l in lambdas):
        raise ValueError("regularizer weights must be nonnegative")
    terms = {"rgb": r_rgb(adv_images, clean_images, rgb_reduction)}
    tape = terms["rgb"].tape
    Va = _lift(tape, V_adv)
    terms["cd"] = r_cd(Va, V)
    terms["lap"], terms["edge"] = smoothness_terms(Va, V, stats, smooth_reference)
    total = None
    for lam, key in zip(lambdas, ("rgb", "cd", "lap", "edge")):
        t = float(lam) * terms[key]
        total = t if total is None else total + t
    return total, terms


# ---------------------------------------------------------------------------
# EOT rendering and the full objective

def eot_render(V, T, F, sampler: ViewSampler, spec: TransformSpec, rng: np.random.Generator,
               background=(1.0, 1.0, 1.0), camera: Camera | None = None, transform: TransformSample | None = None):
    """``t(S(V, T, F, rho(v)))``. Returns (image Tensor [H,W,3], camera, transform)."""
    cam = sampler.sample(rng) if camera is None else camera
    tr = spec.sample(rng) if transform is None else transform
    cam_t = tr.apply_3d(cam, sampler.center, sampler.radius)
    img = rasterize(V, T, F, RenderSettings(cam_t, background))
    return tr.apply_2d(img), cam, tr


class ObjectiveError(FloatingPointError):
    pass


def total_objective(V_adv, T_adv, F, V, T, stats: MeshStats, surrogate, target: int,
                    config: AttackConfig, sampler: ViewSampler, rng: np.random.Generator):
    """Mean EOT cross-entropy over ``config.n_views`` views plus ``beta * R``.

    The clean mesh is rendered under the same view and transforms as the
    adversarial one. Returns (objective Tensor, {name: float}).
    """
    tape = next(x.tape for x in (V_adv, T_adv) if isinstance(x, gt.Tensor))
    spec = config.eot
    adv_imgs, clean_imgs, losses = [], [], []
    for _ in range(config.n_views):
        adv, cam, tr = eot_render(V_adv, T_adv, F, sampler, spec, rng)
        clean, _, _ = eot_render(V, T, F, sampler, spec, rng, camera=cam, transform=tr)
        logits = surrogate.logits(adv)
        losses.append(cross_entropy(logits, target))
        adv_imgs.append(adv)
        clean_imgs.append(clean.value)
        if clean.tape is not tape:
            clean.tape.release()
    lf = losses[0]
    for l in losses[1:]:
        lf = lf + l
    lf = lf / float(len(losses))
    reg, terms = total_regularizer(adv_imgs, clean_imgs, V_adv, V, stats, config.lambdas,
                                   config.rgb_reduction, config.smooth_reference)
    total = lf + config.beta * reg
    parts = {"L_f": float(lf.value)}
    parts.update({f"R_{k}": float(v.value) for k, v in terms.items()})
    parts["total"] = float(total.value)
    for k, v in parts.items():
        if not np.isfinite(v):
            raise ObjectiveError(f"non-finite objective term {k} = {v}; terms: {parts}")
    return total, parts
