"""Differentiable image transforms on [H,W,3] tensors.

Blur and resize are separable linear maps, applied as one matrix product
per image axis so they stay cheap on the tape.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import gradtape as gt


def separable(img: gt.Tensor, Mh: np.ndarray, Mw: np.ndarray) -> gt.Tensor:
    """``out[:, :, c] = Mh @ img[:, :, c] @ Mw.T`` for an [H,W,C] tensor."""
    H, W, C = img.shape
    Ho, Wo = Mh.shape[0], Mw.shape[0]
    x = gt.matmul(Mh, gt.reshape(img, (H, W * C)))  # [Ho, W*C]
    x = gt.transpose(gt.reshape(x, (Ho, W, C)), (1, 0, 2))  # [W, Ho, C]
    x = gt.matmul(Mw, gt.reshape(x, (W, Ho * C)))  # [Wo, Ho*C]
    return gt.transpose(gt.reshape(x, (Wo, Ho, C)), (1, 0, 2))


def gaussian_sigma(k: int) -> float:
    # the usual size-derived sigma for small kernels
    return 0.3 * ((k - 1) * 0.5 - 1.0) + 0.8


def gaussian_kernel(k: int) -> np.ndarray:
    r = k // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-0.5 * (x / gaussian_sigma(k)) ** 2)
    return w / w.sum()


def _reflect(i: int, n: int) -> int:
    # mirror without repeating the edge sample: -1 -> 1, n -> n-2
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


@lru_cache(maxsize=64)
def blur_matrix(n: int, k: int) -> np.ndarray:
    """[n,n] 1-D Gaussian blur with reflective padding; rows sum to one."""
    w = gaussian_kernel(k)
    r = k // 2
    M = np.zeros((n, n))
    for i in range(n):
        for t in range(k):
            M[i, _reflect(i + t - r, n)] += w[t]
    M.setflags(write=False)
    return M


@lru_cache(maxsize=64)
def resize_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and edge clamping."""
    M = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        j0 = int(np.floor(src))
        j1 = min(j0 + 1, n_in - 1)
        f = src - j0
        M[i, j0] += 1.0 - f
        M[i, j1] += f
    M.setflags(write=False)
    return M


def gaussian_blur(img: gt.Tensor, k: int) -> gt.Tensor:
    if k <= 1:
        return img
    H, W, _ = img.shape
    return separable(img, blur_matrix(H, k), blur_matrix(W, k))


def resize(img: gt.Tensor, height: int, width: int) -> gt.Tensor:
    H, W, _ = img.shape
    if (H, W) == (height, width):
        return img
    return separable(img, resize_matrix(height, H), resize_matrix(width, W))


def contrast(img: gt.Tensor, s: float) -> gt.Tensor:
    """``clamp(mean + s * (x - mean), 0, 1)`` with the mean over all pixels and channels."""
    if s == 1.0:
        return img
    m = gt.mean(img)
    return gt.clip(m + s * (img - m), 0.0, 1.0)


def resize_np(img: np.ndarray, height: int, width: int) -> np.ndarray:
    H, W = img.shape[:2]
    if (H, W) == (height, width):
        return np.asarray(img, dtype=np.float64)
    A, B = resize_matrix(height, H), resize_matrix(width, W)
    return np.einsum("ih,hwc,jw->ijc", A, img, B)
