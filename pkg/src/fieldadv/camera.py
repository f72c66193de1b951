"""Pinhole cameras. Camera frame: +x right, +y up, looking down -z."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Camera:
    c2w: np.ndarray  # 4x4 rigid camera-to-world
    fov: float  # vertical field of view, radians
    width: int
    height: int

    def __post_init__(self):
        self.c2w = np.asarray(self.c2w, dtype=np.float64).reshape(4, 4)
        if not (0.0 < self.fov < np.pi):
            raise ValueError(f"fov must lie in (0, pi), got {self.fov}")
        R = self.c2w[:3, :3]
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6:
            raise ValueError("camera rotation block is not orthonormal")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be positive")

    @property
    def focal(self) -> float:
        return 0.5 * self.height / np.tan(0.5 * self.fov)

    @property
    def position(self) -> np.ndarray:
        return self.c2w[:3, 3].copy()

    @property
    def rotation(self) -> np.ndarray:
        return self.c2w[:3, :3].copy()

    def with_resolution(self, width: int, height: int) -> "Camera":
        return Camera(self.c2w.copy(), self.fov, width, height)

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts) - self.c2w[:3, 3]) @ self.c2w[:3, :3]

    def project(self, pts: np.ndarray) -> np.ndarray:
        """[n,3] world points -> [n,3] (pixel x, pixel y, depth along view axis)."""
        pc = self.world_to_camera(pts)
        depth = -pc[:, 2]
        f = self.focal
        with np.errstate(divide="ignore", invalid="ignore"):
            sx = 0.5 * self.width + f * pc[:, 0] / depth
            sy = 0.5 * self.height - f * pc[:, 1] / depth
        return np.stack([sx, sy, depth], axis=1)

    def pixel_directions(self) -> np.ndarray:
        """Unit world-space directions through every pixel center, [H,W,3]."""
        f = self.focal
        xs = (np.arange(self.width) + 0.5 - 0.5 * self.width) / f
        ys = -(np.arange(self.height) + 0.5 - 0.5 * self.height) / f
        gx, gy = np.meshgrid(xs, ys)
        d = np.stack([gx, gy, -np.ones_like(gx)], axis=-1)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return d @ self.c2w[:3, :3].T


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world matrix placing the camera at ``eye`` facing ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, np.array([0.0, 0.0, 1.0]))
    right /= np.linalg.norm(right)
    true_up = np.cross(right, fwd)
    m = np.eye(4)
    m[:3, 0], m[:3, 1], m[:3, 2], m[:3, 3] = right, true_up, -fwd, eye
    return m


def orbit_eye(azimuth: float, elevation: float, radius: float, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Point on a sphere around ``center``; elevation measured from the xz-plane, +y up."""
    c = np.asarray(center, dtype=np.float64)
    return c + radius * np.array([
        np.cos(elevation) * np.sin(azimuth),
        np.sin(elevation),
        np.cos(elevation) * np.cos(azimuth),
    ])
