"""Fixed-seed reference benchmark: five synthetic objects, the six-class zoo,
and cached attack runs keyed by (object, mode, geometry, beta)."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classifiers
from .attack import choose_target, read_trace, run_attack, export_adversarial
from .fields import RadianceField
from .fileio import load_params, save_params
from .meshing import TriMesh, colorize, extract_isosurface
from .objective import AttackConfig
from .reconstruct import train_field
from .scenes import SHAPE_CLASSES, Pattern, make_dataset, single_object

log = logging.getLogger(__name__)

DEFAULT_CACHE = Path(__file__).resolve().parents[2] / ".cache"


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    shape: str
    pattern: Pattern

    @property
    def label(self) -> int:
        return SHAPE_CLASSES.index(self.shape)


def _band(shape: str, s: float, v: float, shift: float = 0.0) -> tuple:
    return tuple(round(c, 4) for c in classifiers.class_color(SHAPE_CLASSES.index(shape), s, v, shift))


# each object's colors come from its own class's hue band, like the classifier training data
REFERENCE_OBJECTS = (
    ObjectSpec("sphere", "sphere", Pattern("stripes", _band("sphere", 0.8, 0.85), _band("sphere", 0.5, 0.6, 0.03),
                                           3.0, (0.0, 1.0, 0.0))),
    ObjectSpec("cube", "cube", Pattern("checker", _band("cube", 0.85, 0.9), _band("cube", 0.55, 0.6, -0.02), 2.5)),
    ObjectSpec("torus", "torus", Pattern("solid", _band("torus", 0.6, 0.7))),
    ObjectSpec("cone", "cone", Pattern("stripes", _band("cone", 0.7, 0.8), _band("cone", 0.5, 0.55, 0.03), 4.0,
                                       (1.0, 1.0, 0.0))),
    ObjectSpec("cylinder", "cylinder", Pattern("checker", _band("cylinder", 0.75, 0.85),
                                               _band("cylinder", 0.5, 0.55, -0.03), 3.0)),
)
OBJECT_NAMES = tuple(o.name for o in REFERENCE_OBJECTS)


def save_mesh(path, mesh: TriMesh) -> None:
    """Exact (binary) mesh snapshot; OBJ is the rounded exchange format."""
    save_params(path, {"kind": "trimesh"}, {"V": mesh.V, "F": mesh.F.astype(np.float64), "T": mesh.T})


def load_mesh(path) -> TriMesh:
    cfg, a = load_params(path)
    if cfg.get("kind") != "trimesh":
        raise ValueError(f"{path}: not a mesh snapshot")
    return TriMesh(a["V"], a["F"].astype(np.int64), a["T"])


@dataclass
class CachedResult:
    """An attack result as reloaded from disk (no field attached)."""

    mesh_adv: TriMesh
    trace: list
    final: dict
    config: AttackConfig
    target: int
    seconds: float = float("nan")  # wall time of the original run

    def objective_trace(self) -> np.ndarray:
        return np.array([r["total"] for r in self.trace])


class Benchmark:
    def __init__(self, cache_dir=None, seed: int = 0, recon_epochs: int = 2, mc_resolution: int = 64):
        self.cache = Path(cache_dir) if cache_dir is not None else DEFAULT_CACHE
        self.cache.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.recon_epochs = recon_epochs
        self.mc_resolution = mc_resolution
        self._zoo = None
        self._objects: dict = {}

    # -- models ------------------------------------------------------------
    def zoo(self) -> classifiers.Zoo:
        if self._zoo is None:
            self._zoo = classifiers.zoo(self.seed, cache_dir=self.cache / "zoo")
        return self._zoo

    def models(self) -> dict:
        z = self.zoo()
        return {m.name: m for m in z.members}

    # -- objects -----------------------------------------------------------
    def targets(self) -> dict:
        rng = np.random.default_rng([self.seed, 31])
        return {o.name: choose_target(o.label, len(SHAPE_CLASSES), rng) for o in REFERENCE_OBJECTS}

    def spec(self, name: str) -> ObjectSpec:
        return next(o for o in REFERENCE_OBJECTS if o.name == name)

    def object(self, name: str):
        """(field, clean colorized mesh, label, target) for one reference object."""
        if name in self._objects:
            return self._objects[name]
        spec = self.spec(name)
        d = self.cache / "objects" / name
        fpath, mpath = d / "field.bin", d / "mesh.bin"
        if fpath.exists() and mpath.exists():
            field, mesh = RadianceField.load(fpath), load_mesh(mpath)
        else:
            d.mkdir(parents=True, exist_ok=True)
            ds = make_dataset(single_object(spec.shape, spec.pattern), seed=self.seed)
            field, score = train_field(ds, self.recon_epochs, seed=self.seed)
            mesh = colorize(extract_isosurface(field, self.mc_resolution), field)
            field.save(fpath)
            save_mesh(mpath, mesh)
            (d / "recon.json").write_text(json.dumps({"psnr": score, "n": mesh.n, "m": mesh.m}) + "\n")
        out = (field, mesh, spec.label, self.targets()[name])
        self._objects[name] = out
        return out

    # -- attacks -----------------------------------------------------------
    def attack_config(self, name: str, **kw) -> AttackConfig:
        _, _, label, target = self.object(name)
        base = dict(target=target, label=label, seed=self.seed * 100 + OBJECT_NAMES.index(name))
        base.update(kw)
        return AttackConfig(**base)

    def attack(self, name: str, mode: str = "mlp_grid", geometry: str = "tex_geo", beta: float = 1e3,
               **kw) -> CachedResult:
        cfg = self.attack_config(name, mode=mode, geometry=geometry, beta=float(beta), **kw)
        key = f"{name}_{mode}_{geometry}_b{beta:g}" + "".join(f"_{k}{v}" for k, v in sorted(kw.items()))
        d = self.cache / "attacks" / key
        if (d / "mesh_adv.bin").exists():
            trace = read_trace(d / "trace.csv")
            tpath = d / "timing.json"
            secs = json.loads(tpath.read_text())["seconds"] if tpath.exists() else float("nan")
            return CachedResult(load_mesh(d / "mesh_adv.bin"), trace, trace[-1] if trace else {},
                                cfg, cfg.target, secs)
        field, mesh, _, _ = self.object(name)
        surrogate = self.zoo().surrogate
        t0 = time.perf_counter()
        res = run_attack(field, mesh, surrogate, cfg)
        secs = time.perf_counter() - t0
        log.info("attack %s: %.1fs", key, secs)
        export_adversarial(res, d)
        save_mesh(d / "mesh_adv.bin", res.mesh_adv)
        (d / "timing.json").write_text(json.dumps({"seconds": secs}) + "\n")
        return CachedResult(res.mesh_adv, res.trace, res.final, cfg, res.target, secs)
