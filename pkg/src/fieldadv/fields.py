"""Grid-based radiance field: two multiresolution hash grids, two shallow MLPs.

Geometry: ``sigma = softplus(M_geo(G_geo(x)))``.
Texture:  ``c = sigmoid(M_tex(G_tex(x)))`` (view independent).
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

from . import gradtape as gt
from ._kernels import hash_encode_bwd, hash_encode_fwd
from .fileio import load_params, save_params

PARAM_GROUPS = {
    "grid_tex": ("tex.grid",),
    "mlp_tex": ("tex.w0", "tex.b0", "tex.w1", "tex.b1"),
    "both_tex": ("tex.grid", "tex.w0", "tex.b0", "tex.w1", "tex.b1"),
    "geo_all": ("geo.grid", "geo.w0", "geo.b0", "geo.w1", "geo.b1"),
}

OUTSIDE_COLOR = 0.5


@dataclass
class GridConfig:
    num_levels: int = 8
    base_resolution: int = 16
    per_level_scale: float = 1.5
    table_size_log2: int = 15
    features_per_level: int = 2


@dataclass
class FieldConfig:
    geo_grid: GridConfig = field(default_factory=GridConfig)
    tex_grid: GridConfig = field(default_factory=GridConfig)
    hidden: int = 64
    bbox_min: tuple = (-1.0, -1.0, -1.0)
    bbox_max: tuple = (1.0, 1.0, 1.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bbox_min"] = list(self.bbox_min)
        d["bbox_max"] = list(self.bbox_max)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FieldConfig":
        return cls(
            geo_grid=GridConfig(**d["geo_grid"]),
            tex_grid=GridConfig(**d["tex_grid"]),
            hidden=int(d["hidden"]),
            bbox_min=tuple(d["bbox_min"]),
            bbox_max=tuple(d["bbox_max"]),
        )


class HashGrid:
    """Multiresolution hashed feature lattice over an axis-aligned box.

    Level ``l`` has resolution ``floor(N0 * b**l)`` cells per axis. Levels
    whose ``(res+1)**3`` vertices fit in the table are indexed densely;
    finer levels use the XOR-of-primes spatial hash modulo the table size.
    """

    def __init__(self, cfg: GridConfig, bbox_min, bbox_max):
        self.cfg = cfg
        self.lo = np.asarray(bbox_min, dtype=np.float64)
        self.hi = np.asarray(bbox_max, dtype=np.float64)
        self.table_size = 2 ** cfg.table_size_log2
        self.resolutions = np.array(
            [int(np.floor(cfg.base_resolution * cfg.per_level_scale ** l)) for l in range(cfg.num_levels)],
            dtype=np.int64,
        )
        self.dense = np.array([(r + 1) ** 3 <= self.table_size for r in self.resolutions], dtype=np.uint8)

    @property
    def out_dim(self) -> int:
        return self.cfg.num_levels * self.cfg.features_per_level

    @property
    def param_shape(self) -> tuple:
        return (self.cfg.num_levels, self.table_size, self.cfg.features_per_level)

    def init_params(self, rng: np.random.Generator, scale: float = 1e-4) -> np.ndarray:
        return rng.uniform(-scale, scale, size=self.param_shape)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        u = (np.asarray(x, dtype=np.float64) - self.lo) / (self.hi - self.lo)
        return np.ascontiguousarray(np.clip(u, 0.0, 1.0))

    def vertex_index(self, level: int, ijk) -> int:
        """Table slot of integer lattice vertex ``ijk`` at ``level``."""
        res = int(self.resolutions[level])
        ix, iy, iz = (int(v) for v in ijk)
        if self.dense[level]:
            return ix + iy * (res + 1) + iz * (res + 1) ** 2
        h = (ix * 1) & 0xFFFFFFFF
        h ^= (iy * 2654435761) & 0xFFFFFFFF
        h ^= (iz * 805459861) & 0xFFFFFFFF
        return h % self.table_size

    def corner_weights(self, x: np.ndarray, level: int) -> tuple[np.ndarray, np.ndarray]:
        """Table indices and trilinear weights of the 8 enclosing corners, [P,8] each."""
        from ._kernels._pykernels import _corners

        u = self.normalize(np.atleast_2d(x))
        idx, w, _ = _corners(u, int(self.resolutions[level]), bool(self.dense[level]), self.table_size)
        return idx, w

    def encode_np(self, table: np.ndarray, x: np.ndarray) -> np.ndarray:
        return hash_encode_fwd(self.normalize(np.atleast_2d(x)), np.ascontiguousarray(table),
                               self.resolutions, self.dense)


def grid_encode(grid: HashGrid, table: gt.Tensor, x) -> gt.Tensor:
    """Differentiable hash-grid lookup; ``x`` is [P,3] world points.

    Gradients flow into the table and, if ``x`` is a Tensor, into the points
    (zero where a point was clamped to the box).
    """
    tape = table.tape
    xt = x if isinstance(x, gt.Tensor) else None
    xv = xt.value if xt is not None else np.asarray(x, dtype=np.float64)
    if xv.ndim != 2 or xv.shape[1] != 3:
        raise gt.ShapeError("grid_encode", xv.shape, detail="points must be [P,3]")
    if table.shape != grid.param_shape:
        raise gt.ShapeError("grid_encode", table.shape, grid.param_shape)
    raw = (xv - grid.lo) / (grid.hi - grid.lo)
    inside = ((raw >= 0.0) & (raw <= 1.0)).astype(np.float64)
    u = np.ascontiguousarray(np.clip(raw, 0.0, 1.0))
    tv = np.ascontiguousarray(table.value)
    out = hash_encode_fwd(u, tv, grid.resolutions, grid.dense)
    inputs = [table] if xt is None else [table, xt]
    want_table = table.requires_grad
    want_points = xt is not None and xt.requires_grad
    scale = 1.0 / (grid.hi - grid.lo)

    def vjp(g):
        dt, du = hash_encode_bwd(u, tv, np.ascontiguousarray(g), grid.resolutions, grid.dense,
                                 want_table, want_points)
        if xt is None:
            return (dt,)
        return dt, (du * scale * inside if du is not None else None)
    return tape.record("grid_encode", inputs, out, vjp)


class ShallowMLP:
    """``in -> hidden (ReLU) -> out`` with a fixed output activation."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, out_activation: str):
        if out_activation not in ("softplus", "sigmoid"):
            raise ValueError(f"unsupported output activation {out_activation!r}")
        self.in_dim, self.hidden, self.out_dim = in_dim, hidden, out_dim
        self.out_activation = out_activation

    def init_params(self, rng: np.random.Generator, prefix: str) -> dict[str, np.ndarray]:
        b0 = np.sqrt(6.0 / self.in_dim)
        b1 = np.sqrt(3.0 / self.hidden)
        return {
            f"{prefix}.w0": rng.uniform(-b0, b0, size=(self.in_dim, self.hidden)),
            f"{prefix}.b0": np.zeros(self.hidden),
            f"{prefix}.w1": rng.uniform(-b1, b1, size=(self.hidden, self.out_dim)),
            f"{prefix}.b1": np.zeros(self.out_dim),
        }

    def __call__(self, h: gt.Tensor, p: dict, prefix: str) -> gt.Tensor:
        n = h.shape[0]
        z = gt.matmul(h, p[f"{prefix}.w0"]) + gt.broadcast_to(p[f"{prefix}.b0"], (n, self.hidden))
        z = gt.relu(z)
        z = gt.matmul(z, p[f"{prefix}.w1"]) + gt.broadcast_to(p[f"{prefix}.b1"], (n, self.out_dim))
        return gt.softplus(z) if self.out_activation == "softplus" else gt.sigmoid(z)


class RadianceField:
    """Geometry and texture branches plus their parameters (numpy arrays)."""

    def __init__(self, config: FieldConfig | None = None, params: dict | None = None, seed: int = 0):
        self.config = config or FieldConfig()
        c = self.config
        self.geo_grid = HashGrid(c.geo_grid, c.bbox_min, c.bbox_max)
        self.tex_grid = HashGrid(c.tex_grid, c.bbox_min, c.bbox_max)
        self.geo_mlp = ShallowMLP(self.geo_grid.out_dim, c.hidden, 1, "softplus")
        self.tex_mlp = ShallowMLP(self.tex_grid.out_dim, c.hidden, 3, "sigmoid")
        if params is None:
            rng = np.random.default_rng(seed)
            params = {"geo.grid": self.geo_grid.init_params(rng), "tex.grid": self.tex_grid.init_params(rng)}
            params.update(self.geo_mlp.init_params(rng, "geo"))
            params.update(self.tex_mlp.init_params(rng, "tex"))
        self.params = params

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.geo_grid.lo.copy(), self.geo_grid.hi.copy()

    def copy(self) -> "RadianceField":
        return RadianceField(copy.deepcopy(self.config), {k: v.copy() for k, v in self.params.items()})

    def bind(self, tape: gt.Tape, trainable=()) -> dict[str, gt.Tensor]:
        """Register every parameter on ``tape``; names in ``trainable`` require grad."""
        trainable = set(trainable)
        return {k: tape.leaf(v, requires_grad=k in trainable) for k, v in self.params.items()}

    def _inside(self, xv):
        lo, hi = self.bbox
        return np.all((xv >= lo) & (xv <= hi), axis=1)

    def density(self, x, bound: dict) -> gt.Tensor:
        """sigma [P] on the tape of ``bound``."""
        sigma = self.geo_mlp(grid_encode(self.geo_grid, bound["geo.grid"], x), bound, "geo")
        sigma = gt.reshape(sigma, (sigma.shape[0],))
        xv = x.value if isinstance(x, gt.Tensor) else np.asarray(x)
        inside = self._inside(xv)
        if not inside.all():
            sigma = sigma * inside.astype(np.float64)
        return sigma

    def color(self, x, bound: dict) -> gt.Tensor:
        """c [P,3] on the tape of ``bound``."""
        c = self.tex_mlp(grid_encode(self.tex_grid, bound["tex.grid"], x), bound, "tex")
        xv = x.value if isinstance(x, gt.Tensor) else np.asarray(x)
        inside = self._inside(xv)
        if not inside.all():
            m = np.repeat(inside.astype(np.float64)[:, None], 3, axis=1)
            c = c * m + (1.0 - m) * OUTSIDE_COLOR
        return c

    def density_at(self, x, chunk: int = 65536) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.empty(x.shape[0])
        for s in range(0, x.shape[0], chunk):
            tape = gt.Tape()
            out[s:s + chunk] = self.density(x[s:s + chunk], self.bind(tape)).value
            tape.release()
        return out

    def color_at(self, x, chunk: int = 65536) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.empty((x.shape[0], 3))
        for s in range(0, x.shape[0], chunk):
            tape = gt.Tape()
            out[s:s + chunk] = self.color(x[s:s + chunk], self.bind(tape)).value
            tape.release()
        return out

    def save(self, path) -> None:
        save_params(path, {"kind": "radiance_field", "field": self.config.to_dict()}, self.params)

    @classmethod
    def load(cls, path) -> "RadianceField":
        cfg, arrays = load_params(path)
        if cfg.get("kind") != "radiance_field":
            raise ValueError(f"{path}: not a radiance-field checkpoint")
        return cls(FieldConfig.from_dict(cfg["field"]), arrays)


def param_partition(field: RadianceField, selector: str) -> dict[str, np.ndarray]:
    """The named disjoint parameter subset (live arrays, not copies)."""
    try:
        names = PARAM_GROUPS[selector]
    except KeyError:
        raise ValueError(f"unknown parameter group {selector!r}; expected one of {sorted(PARAM_GROUPS)}") from None
    return {k: field.params[k] for k in names}


def param_count(group: dict) -> int:
    return int(sum(v.size for v in group.values()))
