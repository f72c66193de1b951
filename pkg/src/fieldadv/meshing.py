"""Isosurface extraction, vertex colorization, mesh statistics and OBJ I/O."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gradtape as gt
from ._mctables import CORNERS, EDGES, TRI_TABLE

MAX_FACES = 20000


def default_iso() -> float:
    # softplus(0) + 1: well above the density of an untrained field
    return float(np.log(2.0) + 1.0)


@dataclass
class TriMesh:
    V: np.ndarray  # [n,3]
    F: np.ndarray  # [m,3] int64
    T: np.ndarray | None = None  # [n,3] in [0,1], None until colorized

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64).reshape(-1, 3)
        self.F = np.asarray(self.F, dtype=np.int64).reshape(-1, 3)
        n = self.V.shape[0]
        if self.F.size:
            if self.F.min() < 0 or self.F.max() >= n:
                raise ValueError("face index out of range")
            f = self.F
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("face repeats a vertex")
        if self.T is not None:
            self.T = np.asarray(self.T, dtype=np.float64).reshape(-1, 3)
            if self.T.shape[0] != n:
                raise ValueError(f"{self.T.shape[0]} colors for {n} vertices")
            if self.T.size and (self.T.min() < 0.0 or self.T.max() > 1.0):
                raise ValueError("vertex colors must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def m(self) -> int:
        return self.F.shape[0]

    def copy(self) -> "TriMesh":
        return TriMesh(self.V.copy(), self.F.copy(), None if self.T is None else self.T.copy())

    def area(self) -> float:
        if self.m == 0:
            return 0.0
        a, b, c = (self.V[self.F[:, k]] for k in range(3))
        return float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())

    def signed_volume(self) -> float:
        if self.m == 0:
            return 0.0
        a, b, c = (self.V[self.F[:, k]] for k in range(3))
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


# ---------------------------------------------------------------------------
# marching cubes

_TRI = np.full((256, 16), -1, dtype=np.int64)
for _c, _t in enumerate(TRI_TABLE):
    _TRI[_c, :len(_t)] = _t
_NTRI = np.array([len(t) // 3 for t in TRI_TABLE], dtype=np.int64)
_CORNERS = np.array(CORNERS, dtype=np.int64)
_EDGES = np.array(EDGES, dtype=np.int64)
# every cell edge as (lower lattice corner offset, axis)
_EDGE_BASE = np.minimum(_CORNERS[_EDGES[:, 0]], _CORNERS[_EDGES[:, 1]])
_EDGE_AXIS = np.argmax(np.abs(_CORNERS[_EDGES[:, 1]] - _CORNERS[_EDGES[:, 0]]), axis=1)


def lattice_points(resolution: int, lo, hi) -> np.ndarray:
    """(res+1)^3 lattice points, x fastest, as [(res+1)^3, 3]."""
    axis = [np.linspace(lo[k], hi[k], resolution + 1) for k in range(3)]
    zz, yy, xx = np.meshgrid(axis[2], axis[1], axis[0], indexing="ij")
    return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)


def marching_cubes(values: np.ndarray, lo, hi) -> TriMesh:
    """Triangulate the zero level of ``values`` indexed [z, y, x], inside where > 0.

    Vertices are merged by lattice edge so neighboring cells share them.
    Faces are wound counter-clockwise seen from outside (the <= 0 side).
    """
    vals = np.asarray(values, dtype=np.float64)
    nz, ny, nx = vals.shape
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    inside = vals > 0.0
    cz, cy, cx = nz - 1, ny - 1, nx - 1
    case = np.zeros((cz, cy, cx), dtype=np.int64)
    for k, (ox, oy, oz) in enumerate(CORNERS):
        case |= inside[oz:oz + cz, oy:oy + cy, ox:ox + cx].astype(np.int64) << k
    cells = np.nonzero((case != 0) & (case != 255))
    if cells[0].size == 0:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    ccase = case[cells]
    ntri = _NTRI[ccase]
    cell_of_tri = np.repeat(np.arange(ccase.size), ntri)
    slot = np.arange(cell_of_tri.size) - np.repeat(np.cumsum(ntri) - ntri, ntri)
    tri_edges = np.stack([_TRI[ccase[cell_of_tri], 3 * slot + j] for j in range(3)], axis=1)  # [t,3]
    base = np.stack([cells[2], cells[1], cells[0]], axis=1)[cell_of_tri]  # [t,3] (x,y,z)
    # lattice edge key = 3 * linear index of lower endpoint + axis
    p0 = base[:, None, :] + _EDGE_BASE[tri_edges]  # [t,3,3]
    axis = _EDGE_AXIS[tri_edges]
    lin = p0[..., 0] + nx * (p0[..., 1] + ny * p0[..., 2])
    keys = 3 * lin + axis
    ukeys, inv = np.unique(keys.ravel(), return_inverse=True)
    F = inv.reshape(-1, 3)
    # vertex positions by linear interpolation along each unique edge
    ulin, uaxis = ukeys // 3, ukeys % 3
    ax = ulin % nx
    ay = (ulin // nx) % ny
    az = ulin // (nx * ny)
    a = np.stack([ax, ay, az], axis=1)
    b = a.copy()
    b[np.arange(b.shape[0]), uaxis] += 1
    va = vals[a[:, 2], a[:, 1], a[:, 0]]
    vb = vals[b[:, 2], b[:, 1], b[:, 0]]
    t = va / (va - vb)
    cell = (hi - lo) / np.array([nx - 1, ny - 1, nz - 1])
    pa = lo + a * cell
    pb = lo + b * cell
    V = pa + t[:, None] * (pb - pa)
    # the table winds triangles the other way round for inside = positive
    return TriMesh(V, F[:, ::-1].copy())


def extract_isosurface(field, grid_resolution: int = 64, iso: float | None = None,
                       bbox=None) -> TriMesh:
    """Mesh the level set ``sigma == iso`` of a field (or a density callable).

    ``field`` is a RadianceField or a function mapping [P,3] points to [P]
    densities (then ``bbox`` defaults to [-1,1]^3). Colors are left unset.
    """
    if grid_resolution < 8:
        raise ValueError("grid_resolution must be >= 8")
    iso = default_iso() if iso is None else float(iso)
    if iso <= 0:
        raise ValueError("iso threshold must be positive")
    if hasattr(field, "density_at"):
        lo, hi = field.bbox if bbox is None else bbox
        density = field.density_at
    else:
        lo, hi = ((-1.0,) * 3, (1.0,) * 3) if bbox is None else bbox
        density = field
    lo, hi = np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64)
    pts = lattice_points(grid_resolution, lo, hi)
    r = grid_resolution + 1
    sigma = np.asarray(density(pts), dtype=np.float64).reshape(r, r, r)
    return marching_cubes(sigma - iso, lo, hi)


def vertex_colors(field, bound: dict, V) -> gt.Tensor:
    """Differentiable per-vertex colors on the tape of ``bound``; V is [n,3] array or Tensor."""
    lo, hi = field.bbox
    if isinstance(V, gt.Tensor):
        return field.color(gt.clip(V, lo.min(), hi.max()) if _outside(V.value, lo, hi) else V, bound)
    return field.color(np.clip(np.asarray(V, dtype=np.float64), lo, hi), bound)


def _outside(v, lo, hi) -> bool:
    return bool(np.any(v < lo) or np.any(v > hi))


def colorize(mesh: TriMesh, field) -> TriMesh:
    """Copy of ``mesh`` with T filled from the texture branch at each vertex."""
    lo, hi = field.bbox
    T = field.color_at(np.clip(mesh.V, lo, hi)) if mesh.n else np.zeros((0, 3))
    return TriMesh(mesh.V.copy(), mesh.F.copy(), T)


# ---------------------------------------------------------------------------
# connectivity

@dataclass
class MeshStats:
    n: int
    m: int
    edges: np.ndarray  # [E,2], i < j, lexicographically sorted
    neighbors: list  # per-vertex sorted index arrays
    bbox: tuple
    nbr_ptr: np.ndarray  # CSR row pointers into nbr_idx
    nbr_idx: np.ndarray

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.nbr_ptr)


def unique_edges(F: np.ndarray) -> np.ndarray:
    if F.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def mesh_stats(mesh: TriMesh) -> MeshStats:
    edges = unique_edges(mesh.F)
    both = np.concatenate([edges, edges[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    counts = np.bincount(both[:, 0], minlength=mesh.n) if both.size else np.zeros(mesh.n, dtype=np.int64)
    ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    idx = both[:, 1].astype(np.int64)
    neighbors = [idx[ptr[i]:ptr[i + 1]] for i in range(mesh.n)]
    if mesh.n:
        bbox = (mesh.V.min(axis=0), mesh.V.max(axis=0))
    else:
        bbox = (np.zeros(3), np.zeros(3))
    return MeshStats(mesh.n, mesh.m, edges, neighbors, bbox, ptr, idx)


# ---------------------------------------------------------------------------
# decimation

def decimate(mesh: TriMesh, max_faces: int = MAX_FACES) -> TriMesh:
    """Shortest-edge collapse until at most ``max_faces`` faces remain.

    Each pass collapses a vertex-disjoint set of the shortest edges to their
    midpoints, then drops faces that became degenerate or duplicated.
    """
    max_faces = min(int(max_faces), MAX_FACES)
    V, F = mesh.V.copy(), mesh.F.copy()
    T = None if mesh.T is None else mesh.T.copy()
    while F.shape[0] > max_faces:
        edges = unique_edges(F)
        length = np.linalg.norm(V[edges[:, 0]] - V[edges[:, 1]], axis=1)
        order = np.argsort(length, kind="stable")
        budget = max(1, (F.shape[0] - max_faces) // 2)
        used = np.zeros(V.shape[0], dtype=bool)
        remap = np.arange(V.shape[0])
        done = 0
        for e in order:
            i, j = edges[e]
            if used[i] or used[j]:
                continue
            used[i] = used[j] = True
            V[i] = 0.5 * (V[i] + V[j])
            if T is not None:
                T[i] = 0.5 * (T[i] + T[j])
            remap[j] = i
            done += 1
            if done >= budget:
                break
        F = remap[F]
        ok = (F[:, 0] != F[:, 1]) & (F[:, 1] != F[:, 2]) & (F[:, 0] != F[:, 2])
        F = F[ok]
        _, first = np.unique(np.sort(F, axis=1), axis=0, return_index=True)
        F = F[np.sort(first)]
        if done == 0:
            break
    keep = np.unique(F)
    new = np.full(V.shape[0], -1, dtype=np.int64)
    new[keep] = np.arange(keep.size)
    return TriMesh(V[keep], new[F], None if T is None else T[keep])


# ---------------------------------------------------------------------------
# OBJ with vertex colors

def write_obj(path, mesh: TriMesh) -> Path:
    path = Path(path)
    T = mesh.T if mesh.T is not None else np.full((mesh.n, 3), 0.5)
    lines = [f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f} {c[0]:.6f} {c[1]:.6f} {c[2]:.6f}" for v, c in zip(mesh.V, T)]
    lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in mesh.F]
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write OBJ {path}: {exc}") from exc
    return path


def read_obj(path) -> TriMesh:
    V, T, F = [], [], []
    has_color = True
    with open(path) as fh:
        for ln in fh:
            parts = ln.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                V.append([float(x) for x in parts[1:4]])
                if len(parts) >= 7:
                    T.append([float(x) for x in parts[4:7]])
                else:
                    has_color = False
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(V) + i for i in idx]
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    F.append([idx[0], idx[k], idx[k + 1]])
    V = np.array(V, dtype=np.float64).reshape(-1, 3)
    F = np.array(F, dtype=np.int64).reshape(-1, 3)
    T = np.array(T, dtype=np.float64).reshape(-1, 3) if has_color and len(T) == len(V) else None
    return TriMesh(V, F, T)
