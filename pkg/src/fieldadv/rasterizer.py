"""Differentiable triangle rasterizer over vertex colors.

The forward pass resolves the nearest face at every pixel center with a
compiled z-buffer kernel. The covered pixels are then re-evaluated on the
tape: perspective-correct barycentrics of the pixel center in its face,
used to blend the three vertex colors. Gradients therefore reach the
colors exactly and the vertex positions through interior pixels only;
coverage and occlusion changes carry no gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gradtape as gt
from ._kernels import raster_faces
from .camera import Camera
from .fileio import write_image

NEAR = 1e-3


@dataclass
class RenderSettings:
    camera: Camera
    background: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.camera.width < 16 or self.camera.height < 16:
            raise ValueError("render resolution must be at least 16x16")
        bg = np.asarray(self.background, dtype=np.float64).reshape(-1)
        self.background = tuple(float(v) for v in (np.repeat(bg, 3) if bg.size == 1 else bg))

    @property
    def shape(self) -> tuple[int, int]:
        return self.camera.height, self.camera.width


def _as_tensor(tape, x):
    return x if isinstance(x, gt.Tensor) else tape.const(np.asarray(x, dtype=np.float64))


def face_ids(Vv: np.ndarray, F: np.ndarray, camera: Camera) -> np.ndarray:
    """Nearest face index per pixel center, -1 where uncovered. [H,W] int32."""
    H, W = camera.height, camera.width
    if F.shape[0] == 0:
        return np.full((H, W), -1, dtype=np.int32)
    scr = camera.project(Vv)
    # vertices in front of the near plane invalidate their faces (kernel skips depth <= 0)
    scr[scr[:, 2] < NEAR, 2] = -1.0
    scr = np.ascontiguousarray(np.nan_to_num(scr, nan=0.0, posinf=0.0, neginf=0.0))
    return raster_faces(scr, np.ascontiguousarray(F, dtype=np.int64), H, W)


def rasterize(V, T, F, settings: RenderSettings, tape: gt.Tape | None = None) -> gt.Tensor:
    """Render vertex-colored triangles; returns an [H,W,3] tensor.

    ``V`` [n,3] and ``T`` [n,3] may be tensors (gradients flow) or arrays.
    """
    if tape is None:
        tape = next((x.tape for x in (V, T) if isinstance(x, gt.Tensor)), None) or gt.Tape()
    cam = settings.camera
    H, W = cam.height, cam.width
    F = np.asarray(F, dtype=np.int64).reshape(-1, 3)
    Vt, Tt = _as_tensor(tape, V), _as_tensor(tape, T)
    if Vt.shape != Tt.shape or (Vt.ndim != 2 or Vt.shape[1] != 3):
        raise gt.ShapeError("rasterize", Vt.shape, Tt.shape, detail="V and T must both be [n,3]")
    bg = np.asarray(settings.background)
    fid = face_ids(Vt.value, F, cam).reshape(-1)
    pix = np.nonzero(fid >= 0)[0]
    bg_img = np.broadcast_to(bg, (H * W, 3)).copy()
    if pix.size == 0:
        return gt.reshape(tape.const(bg_img), (H, W, 3))
    bg_img[pix] = 0.0
    tri = F[fid[pix]]  # [P,3]
    # camera space on the tape
    R = cam.rotation
    pc = gt.matmul(Vt - gt.broadcast_to(tape.const(cam.position), Vt.shape), R)
    x, y, depth = pc[:, 0], pc[:, 1], -pc[:, 2]
    f = cam.focal
    sx = 0.5 * W + f * x / depth
    sy = 0.5 * H - f * y / depth
    cx = (pix % W) + 0.5
    cy = (pix // W) + 0.5
    X = [gt.gather(sx, tri[:, k]) for k in range(3)]
    Y = [gt.gather(sy, tri[:, k]) for k in range(3)]
    Z = [gt.gather(depth, tri[:, k]) for k in range(3)]
    area = (X[1] - X[0]) * (Y[2] - Y[0]) - (Y[1] - Y[0]) * (X[2] - X[0])
    lam = [
        ((X[2] - X[1]) * (cy - Y[1]) - (Y[2] - Y[1]) * (cx - X[1])) / area,
        ((X[0] - X[2]) * (cy - Y[2]) - (Y[0] - Y[2]) * (cx - X[2])) / area,
        ((X[1] - X[0]) * (cy - Y[0]) - (Y[1] - Y[0]) * (cx - X[0])) / area,
    ]
    q = [lam[k] / Z[k] for k in range(3)]
    qs = q[0] + q[1] + q[2]
    P = pix.size
    rgb = None
    for k in range(3):
        b = gt.broadcast_to(gt.reshape(q[k] / qs, (P, 1)), (P, 3))
        term = b * gt.gather(Tt, tri[:, k])
        rgb = term if rgb is None else rgb + term
    img = gt.scatter_add(rgb, pix, H * W) + bg_img
    return gt.reshape(img, (H, W, 3))


def barycentrics(V, F, camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Face id [H,W] and perspective-correct barycentrics [H,W,3] (zeros where uncovered)."""
    V = np.asarray(V, dtype=np.float64)
    F = np.asarray(F, dtype=np.int64).reshape(-1, 3)
    H, W = camera.height, camera.width
    tape = gt.Tape()
    bary = np.zeros((H * W, 3))
    fid = face_ids(V, F, camera).reshape(-1)
    # expand to per-face vertices so each corner gets its own indicator color
    if F.shape[0]:
        Vx = V[F.reshape(-1)]
        Fx = np.arange(3 * F.shape[0]).reshape(-1, 3)
        Tx = np.tile(np.eye(3), (F.shape[0], 1))
        img = rasterize(Vx, Tx, Fx, RenderSettings(camera, 0.0), tape).value.reshape(-1, 3)
        cov = fid >= 0
        bary[cov] = img[cov]
    return fid.reshape(H, W), bary.reshape(H, W, 3)


def render(mesh, camera: Camera, background=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Plain numpy render of a TriMesh (gray where colors are unset)."""
    T = mesh.T if mesh.T is not None else np.full((mesh.n, 3), 0.5)
    return rasterize(mesh.V, T, mesh.F, RenderSettings(camera, background)).value


def save_render(path, image) -> None:
    write_image(path, np.asarray(image.value if isinstance(image, gt.Tensor) else image))
