"""Targeted adversarial optimization of a field-textured mesh.

Per epoch the vertex colors are re-queried from the texture branch at the
current (possibly displaced) vertices, so the rendering loss reaches the
texture grid / MLP parameters and, through the query points, the offsets.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gradtape as gt
from .fields import PARAM_GROUPS, RadianceField
from .meshing import TriMesh, colorize, mesh_stats, vertex_colors, write_obj
from .objective import AttackConfig, ObjectiveError, ViewSampler, total_objective
from .optim import Adam

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("epoch", "L_f", "R_rgb", "R_cd", "R_lap", "R_edge", "total")

MODE_GROUPS = {
    "mlp_grid": PARAM_GROUPS["both_tex"],
    "grid_only": PARAM_GROUPS["grid_tex"],
    "mlp_only": PARAM_GROUPS["mlp_tex"],
    "mesh_based": (),
}


def choose_target(label: int, n_classes: int, rng: np.random.Generator) -> int:
    """Uniform over the labels other than ``label``."""
    others = [k for k in range(n_classes) if k != label]
    return int(others[rng.integers(len(others))])


def clamp_geometry(dV: np.ndarray, limit: float) -> np.ndarray:
    """Radially project each per-vertex offset onto the ball of radius ``limit``."""
    if limit <= 0:
        raise ValueError("limit must be positive")
    norm = np.linalg.norm(dV, axis=1, keepdims=True)
    scale = np.where(norm > limit, limit / np.maximum(norm, 1e-300), 1.0)
    return dV * scale


@dataclass
class AttackState:
    offsets: np.ndarray
    field: RadianceField | None  # adversarial copy of the field (None in mesh_based mode)
    colors: np.ndarray | None  # free colors in mesh_based mode
    clean: TriMesh
    clean_field: RadianceField
    optimizers: dict = field(default_factory=dict)
    epoch: int = 0
    history: list = field(default_factory=list)


@dataclass
class AttackResult:
    mesh_adv: TriMesh
    field_adv: RadianceField | None
    trace: list  # per-epoch dicts keyed by TRACE_COLUMNS
    final: dict
    config: AttackConfig
    target: int
    seeds: dict

    def objective_trace(self) -> np.ndarray:
        return np.array([r["total"] for r in self.trace])


def _adv_mesh(state: AttackState, config: AttackConfig) -> TriMesh:
    V = state.clean.V + state.offsets
    if config.mode == "mesh_based":
        T = state.colors.copy()
    else:
        T = colorize(TriMesh(V, state.clean.F), state.field).T
    return TriMesh(V, state.clean.F.copy(), T)


def run_attack(field: RadianceField, mesh: TriMesh, surrogate, config: AttackConfig,
               callback=None) -> AttackResult:
    """Optimize the selected parameter groups for ``config.epochs`` epochs.

    ``mesh`` must be colorized from ``field``. Neither is modified; the
    adversarial texture lives in a copy of the field.
    """
    config.validate()
    if mesh.T is None:
        raise ValueError("mesh must be colorized before attacking")
    if config.target is None:
        raise ValueError("config.target must be set")
    if config.label is not None and config.target == config.label:
        raise ValueError("target equals the clean label")
    geo = config.geometry == "tex_geo"
    mesh_based = config.mode == "mesh_based"
    clean = mesh.copy()
    stats = mesh_stats(clean)
    sampler = ViewSampler.for_mesh(clean.V, elevation_range=config.view_elevation,
                                   radius_range=config.view_radius, resolution=config.resolution,
                                   seed=config.seed)
    lo, hi = clean.V.min(axis=0), clean.V.max(axis=0)
    limit = config.clamp_fraction * float(np.linalg.norm(hi - lo))
    state = AttackState(
        offsets=np.zeros_like(clean.V),
        field=None if mesh_based else field.copy(),
        colors=clean.T.copy() if mesh_based else None,
        clean=clean,
        clean_field=field,
    )
    names = MODE_GROUPS[config.mode]
    if names:
        lrs = {k: (config.lr_grid if k.endswith(".grid") else config.lr_mlp) for k in names}
        state.optimizers["field"] = Adam({k: state.field.params[k] for k in names}, lrs)
    if mesh_based:
        state.optimizers["colors"] = Adam({"colors": state.colors}, config.lr_color)
    if geo:
        state.optimizers["offsets"] = Adam({"offsets": state.offsets}, config.lr_offset)
    rng = np.random.default_rng([config.seed, 1])
    for epoch in range(config.epochs):
        tape = gt.Tape()
        dV = tape.leaf(state.offsets, requires_grad=geo)
        Vs = dV + clean.V
        if mesh_based:
            Ts = tape.leaf(state.colors)
            bound = {}
        else:
            bound = state.field.bind(tape, names)
            Ts = vertex_colors(state.field, bound, Vs if geo else clean.V)
        try:
            total, parts = total_objective(Vs, Ts, clean.F, clean.V, clean.T, stats, surrogate,
                                           config.target, config, sampler, rng)
        except ObjectiveError as exc:
            raise ObjectiveError(f"epoch {epoch}: {exc}") from None
        grads = tape.backward(total)
        if names:
            state.optimizers["field"].step({k: grads[bound[k].node_id] for k in names})
        if mesh_based:
            state.optimizers["colors"].step({"colors": grads[Ts.node_id]})
            np.clip(state.colors, 0.0, 1.0, out=state.colors)
        if geo:
            state.optimizers["offsets"].step({"offsets": grads[dV.node_id]})
            state.offsets[...] = clamp_geometry(state.offsets, limit)
        tape.release()
        row = {"epoch": epoch + 1}
        row.update({k: parts[k] for k in TRACE_COLUMNS[1:]})
        state.history.append(row)
        state.epoch = epoch + 1
        if callback is not None:
            callback(epoch, parts)
    # with no epochs the result is exactly the input, not a re-query of the field
    adv = _adv_mesh(state, config) if state.epoch else clean.copy()
    final = dict(state.history[-1]) if state.history else {k: 0.0 for k in TRACE_COLUMNS}
    return AttackResult(adv, state.field, state.history, final, config, int(config.target),
                        {"attack": config.seed})


def export_adversarial(result: AttackResult, out_dir) -> dict:
    """Write mesh_adv.obj, trace.csv and config.json into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"mesh": out / "mesh_adv.obj", "trace": out / "trace.csv", "config": out / "config.json"}
        write_obj(paths["mesh"], result.mesh_adv)
        with open(paths["trace"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in result.trace:
                w.writerow([row["epoch"]] + [repr(float(row[k])) for k in TRACE_COLUMNS[1:]])
        doc = result.config.to_dict()
        doc["target"] = result.target
        paths["config"].write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot export attack result to {out}: {exc}") from exc
    return paths


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(r[k]) if k == "epoch" else float(r[k])) for k in TRACE_COLUMNS} for r in rows]
