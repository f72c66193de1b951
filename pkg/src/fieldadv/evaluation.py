"""Attack success rates, transfer tables and image-naturalness metrics."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import gradtape as gt
from .meshing import TriMesh
from .objective import TransformSample, ViewSampler
from .rasterizer import render

REPORT_COLUMNS = ("object", "model", "mode", "geometry", "beta", "asr", "ssim", "psnr")
EVAL_SEED_OFFSET = 7919  # keeps evaluation views disjoint from attack-time streams


def psnr(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    return 99.0 if mse < 1e-10 else float(10.0 * np.log10(1.0 / mse))


def ssim(a, b, win: int = 8) -> float:
    """Mean SSIM over all 8x8 windows (stride 1) and channels, uniform weights."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    wa = sliding_window_view(a, (win, win), axis=(0, 1))
    wb = sliding_window_view(b, (win, win), axis=(0, 1))
    ma, mb = wa.mean(axis=(-1, -2)), wb.mean(axis=(-1, -2))
    va = ((wa - ma[..., None, None]) ** 2).mean(axis=(-1, -2))
    vb = ((wb - mb[..., None, None]) ** 2).mean(axis=(-1, -2))
    cov = ((wa - ma[..., None, None]) * (wb - mb[..., None, None])).mean(axis=(-1, -2))
    s = ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2))
    return float(s.mean())


def eval_sampler(mesh: TriMesh, seed: int, **kw) -> ViewSampler:
    return ViewSampler.for_mesh(mesh.V, seed=seed, **kw)


def render_views(mesh: TriMesh, cameras, transform: TransformSample | None = None) -> np.ndarray:
    out = []
    for cam in cameras:
        img = render(mesh, cam)
        if transform is not None:
            tape = gt.Tape()
            img = transform.apply_2d(tape.const(img)).value
            tape.release()
        out.append(img)
    return np.stack(out)


def eval_cameras(mesh: TriMesh, n_views: int, seed: int, **kw):
    s = eval_sampler(mesh, seed, **kw)
    return s.sample_many(n_views, np.random.default_rng([seed, EVAL_SEED_OFFSET]))


def asr(mesh: TriMesh, classifier, target: int, n_views: int = 100, seed: int = 0,
        transform: TransformSample | None = None, images: np.ndarray | None = None) -> float:
    """Percentage of ``n_views`` random renders classified as ``target``."""
    if images is None:
        images = render_views(mesh, eval_cameras(mesh, n_views, seed), transform)
    pred = classifier.predict(images)
    return 100.0 * float(np.mean(pred == target))


def naturalness(mesh_adv: TriMesh, mesh_clean: TriMesh, n_views: int = 16, seed: int = 0) -> dict:
    """Mean SSIM / PSNR between adversarial and clean renders at matched views."""
    cams = eval_cameras(mesh_clean, n_views, seed + 1)
    a = render_views(mesh_adv, cams)
    b = render_views(mesh_clean, cams)
    return {"ssim": float(np.mean([ssim(x, y) for x, y in zip(a, b)])),
            "psnr": float(np.mean([psnr(x, y) for x, y in zip(a, b)]))}


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, **row) -> None:
        missing = set(REPORT_COLUMNS) - set(row)
        if missing:
            raise ValueError(f"report row missing {sorted(missing)}")
        self.rows.append({k: row[k] for k in REPORT_COLUMNS})

    def aggregate(self, key: str = "model") -> dict:
        """Arithmetic mean ASR over objects per ``key`` value."""
        out: dict = {}
        for r in self.rows:
            out.setdefault(r[key], []).append(r["asr"])
        return {k: float(np.mean(v)) for k, v in out.items()}

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in self.rows:
                w.writerow([_fmt(r[k]) for k in REPORT_COLUMNS])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        doc = {"meta": self.meta, "aggregate_asr": self.aggregate(), "rows": self.rows}
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return path


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def transfer_matrix(objects: list, models: dict, seed: int = 0, n_views: int = 100,
                    surrogate: str | None = None) -> dict:
    """ASR per (object, model). ``objects`` holds (name, mesh, target) triples.

    Returns {"cells": {obj: {model: asr}}, "mean": {model: mean over objects},
    "surrogate": name}. Each object's views are rendered once and shared by all models.
    """
    cells = {}
    for name, mesh, target in objects:
        imgs = render_views(mesh, eval_cameras(mesh, n_views, seed))
        cells[name] = {m: asr(mesh, clf, target, images=imgs) for m, clf in models.items()}
    mean = {m: float(np.mean([cells[o][m] for o in cells])) for m in models}
    return {"cells": cells, "mean": mean, "surrogate": surrogate}


def format_transfer(table: dict) -> str:
    models = list(table["mean"])
    head = ["object"] + [m + ("*" if m == table.get("surrogate") else "") for m in models]
    lines = ["\t".join(head)]
    for o, row in table["cells"].items():
        lines.append("\t".join([o] + [f"{row[m]:.1f}" for m in models]))
    lines.append("\t".join(["mean"] + [f"{table['mean'][m]:.1f}" for m in models]))
    return "\n".join(lines)


def beta_study(field, mesh: TriMesh, surrogate, config, betas=(1e2, 1e3, 1e4), n_views: int = 100,
               seed: int = 0, runner=None) -> list[dict]:
    """Same object and seeds, beta varied. Reports ASR, SSIM, PSNR and final R_cd per beta.

    ``runner(config)`` may supply a (cached) attack result; default runs the attack.
    """
    from .attack import run_attack

    out = []
    for b in betas:
        cfg = config.with_(beta=float(b))
        res = runner(cfg) if runner is not None else run_attack(field, mesh, surrogate, cfg)
        nat = naturalness(res.mesh_adv, mesh, seed=seed)
        out.append({"beta": float(b), "asr": asr(res.mesh_adv, surrogate, cfg.target, n_views, seed),
                    "ssim": nat["ssim"], "psnr": nat["psnr"], "r_cd": float(res.final.get("R_cd", 0.0))})
    return out
