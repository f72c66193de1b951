"""Finite-difference verification suite for every differentiable piece.

Inputs are kept at unit scale and the grids small so that each check
probes well-conditioned gradients in a few seconds.
"""
from __future__ import annotations

import time

import numpy as np

from . import gradtape as gt
from . import imageops
from .camera import Camera, look_at
from .classifiers import ConvClassifier
from .fields import PARAM_GROUPS, FieldConfig, GridConfig, RadianceField
from .meshing import TriMesh, mesh_stats, vertex_colors
from .objective import AttackConfig, TransformSpec, ViewSampler, cross_entropy, total_objective
from .rasterizer import RenderSettings, rasterize
from .reconstruct import composite, sample_points

TOL = 1e-4


def _rand(rng, *shape, lo=-1.0, hi=1.0):
    return rng.uniform(lo, hi, size=shape)


def _weighted(y: gt.Tensor, w: np.ndarray) -> gt.Tensor:
    return gt.sum(y * w.reshape(y.shape))


def op_checks(rng: np.random.Generator, trials: int = 10):
    """(name, fn(x)->scalar, x) for every op kind; each op gets ``trials`` random inputs."""
    cases = []
    for t in range(trials):
        a = _rand(rng, 3, 4)
        b = _rand(rng, 3, 4)
        pos = _rand(rng, 3, 4, lo=0.5, hi=2.0)
        w = _rand(rng, 3, 4)
        m = _rand(rng, 4, 5)
        idx = rng.integers(0, 3, size=5)
        wm = _rand(rng, 3, 5)
        wg = _rand(rng, 5, 4)
        cases += [
            ("add", lambda x, b=b, w=w: _weighted(x + b, w), a),
            ("sub", lambda x, b=b, w=w: _weighted(b - x, w), a),
            ("mul", lambda x, b=b, w=w: _weighted(x * b, w), a),
            ("div", lambda x, b=b, w=w: _weighted(b / x, w), pos),
            ("power", lambda x, w=w: _weighted(gt.power(x, 2.5), w), pos),
            ("exp", lambda x, w=w: _weighted(gt.exp(x), w), a),
            ("log", lambda x, w=w: _weighted(gt.log(x), w), pos),
            ("relu", lambda x, w=w: _weighted(gt.relu(x), w), a + np.sign(a) * 0.05),
            ("sigmoid", lambda x, w=w: _weighted(gt.sigmoid(x), w), 3 * a),
            ("softplus", lambda x, w=w: _weighted(gt.softplus(x), w), 3 * a),
            ("matmul", lambda x, m=m, wm=wm: _weighted(gt.matmul(x, m), wm), a),
            ("sum", lambda x, w=w: gt.sum(gt.sum(x, axis=1) * w[:, 0]), a),
            ("mean", lambda x, w=w: gt.sum(gt.mean(x, axis=0) * w[0]), a),
            ("cumsum", lambda x, w=w, ex=bool(t % 2): _weighted(gt.cumsum(x, axis=1, exclusive=ex), w), a),
            ("gather", lambda x, idx=idx, wg=wg: _weighted(gt.gather(x, idx), wg), a),
            ("scatter_add", lambda x, idx=idx, w=w: _weighted(gt.scatter_add(gt.gather(x, idx), idx, 3), w), a),
            ("softmax", lambda x, w=w: _weighted(gt.softmax(x, axis=1), w), 2 * a),
            ("log_softmax", lambda x, w=w: _weighted(gt.log_softmax(x, axis=1), w), 2 * a),
            ("concat", lambda x, b=b, w=w: _weighted(gt.concat([x, x * x], axis=1), np.concatenate([b, w], axis=1)), a),
            ("slice", lambda x, w=w: _weighted(x[1:, ::2], w[1:, ::2]), a),
            ("reshape", lambda x, w=w: _weighted(gt.reshape(x, (4, 3)) * gt.reshape(x, (4, 3)), w), a),
            ("transpose", lambda x, w=w: _weighted(gt.transpose(x) * gt.transpose(x), w.T), a),
            ("broadcast_to", lambda x, w=w: _weighted(gt.broadcast_to(gt.sum(x * x), (3, 4)), w), a),
            ("clip", lambda x, w=w: _weighted(gt.clip(x, -0.5, 0.5), w), a + np.sign(a) * 0.01),
        ]
        x4 = _rand(rng, 2, 2, 6, 6)
        k = _rand(rng, 3, 2, 3, 3)
        bias = _rand(rng, 3)
        stride = 1 + t % 2
        out_hw = (6 + 2 - 3) // stride + 1
        g = _rand(rng, 2, 3, out_hw, out_hw)
        cases += [
            ("conv2d.x", lambda x, k=k, bias=bias, s=stride, g=g: _weighted(gt.conv2d(x, k, bias, s, 1), g), x4),
            ("conv2d.w", lambda kk, x4=x4, bias=bias, s=stride, g=g: _weighted(gt.conv2d(x4, kk, bias, s, 1), g), k),
            ("max_pool2d", lambda x, g=_rand(rng, 2, 2, 3, 3): _weighted(gt.max_pool2d(x, 2), g),
             rng.permutation(144).reshape(2, 2, 6, 6) / 144.0),
        ]
    return cases


def _small_field(seed: int = 0) -> RadianceField:
    g = GridConfig(num_levels=2, base_resolution=2, per_level_scale=2.0, table_size_log2=6, features_per_level=2)
    f = RadianceField(FieldConfig(g, g, hidden=8), seed=seed)
    rng = np.random.default_rng(seed + 1)
    for k in ("geo.grid", "tex.grid"):
        f.params[k] = rng.uniform(-1.0, 1.0, size=f.params[k].shape)
    return f


def field_checks(seed: int = 0):
    """color_at / density_at w.r.t. every parameter array; volume rendering w.r.t. grids and MLPs."""
    rng = np.random.default_rng(seed)
    field = _small_field(seed)
    pts = rng.uniform(-0.9, 0.9, size=(6, 3))
    wc = _rand(rng, 6, 3)
    wd = _rand(rng, 6)
    cases = []
    for name in PARAM_GROUPS["geo_all"]:
        def fd(x, name=name):
            b = field.bind(x.tape)
            b[name] = x
            return _weighted(field.density(pts, b), wd)
        cases.append((f"density_at.{name}", fd, field.params[name]))
    for name in PARAM_GROUPS["both_tex"]:
        def fc(x, name=name):
            b = field.bind(x.tape)
            b[name] = x
            return _weighted(field.color(pts, b), wc)
        cases.append((f"color_at.{name}", fc, field.params[name]))
    # volume rendering along two rays
    origins = np.array([[0.1, -0.2, 3.0], [-2.5, 0.3, 0.2]])
    dirs = np.array([[0.0, 0.05, -1.0], [1.0, 0.0, 0.1]])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    near, far = np.array([2.0, 1.5]), np.array([4.0, 3.5])
    sp, width = sample_points(origins, dirs, near, far, 8)
    flat = sp.reshape(-1, 3)
    wr = _rand(rng, 2, 3)
    for name in ("geo.grid", "geo.w1", "tex.grid", "tex.w0"):
        def fv(x, name=name):
            b = field.bind(x.tape)
            b[name] = x
            sig = gt.reshape(field.density(flat, b), (2, 8))
            col = gt.reshape(field.color(flat, b), (2, 8, 3))
            rgb, _, _ = composite(sig, col, width)
            return _weighted(rgb, wr)
        cases.append((f"volume_render.{name}", fv, field.params[name]))
    return cases


def quad_scene():
    """A 4-triangle square pyramid seen from the front at 16x16."""
    V = np.array([[-0.6, -0.6, 0.0], [0.6, -0.6, 0.0], [0.6, 0.6, 0.0], [-0.6, 0.6, 0.0], [0.0, 0.0, 0.4]])
    F = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    cam = Camera(look_at((0.3, 0.2, 2.2)), np.deg2rad(50.0), 16, 16)
    return V, F, cam


def raster_checks(seed: int = 0):
    rng = np.random.default_rng(seed)
    V, F, cam = quad_scene()
    T = rng.uniform(0.1, 0.9, size=(5, 3))
    w = _rand(rng, 16, 16, 3)
    clf = ConvClassifier("gap", n_classes=4, resolution=16, seed=seed)

    def f_colors(x):
        return _weighted(rasterize(V, x, F, RenderSettings(cam)), w)

    def f_pipeline(x):
        img = rasterize(V, x, F, RenderSettings(cam))
        return cross_entropy(clf.logits(img), 1)

    def f_logits_pixels(x):
        return clf.logits(x)[0]

    def f_eot(x):
        img = rasterize(V, x, F, RenderSettings(cam))
        img = imageops.gaussian_blur(imageops.contrast(img, 1.2), 3)
        return _weighted(img, w)

    # jitter the render so flat background pixels don't tie inside max-pool windows
    img0 = rasterize(V, T, F, RenderSettings(cam)).value + rng.uniform(-0.02, 0.02, size=(16, 16, 3))
    return [
        ("rasterize.colors", f_colors, T),
        ("rasterize->classify->cross_entropy", f_pipeline, T),
        ("classifier.logits.pixels", f_logits_pixels, img0),
        ("eot.contrast+blur", f_eot, T),
    ]


def objective_checks(seed: int = 0):
    """Full attack objective w.r.t. the texture grid and texture MLP on the pyramid."""
    V, F, _ = quad_scene()
    field = _small_field(seed)
    mesh = TriMesh(V, F, field.color_at(V))
    stats = mesh_stats(mesh)
    clf = ConvClassifier("gap", n_classes=4, resolution=16, seed=seed)
    cfg = AttackConfig(n_views=2, resolution=16, target=2, eot=TransformSpec(), beta=10.0)
    sampler = ViewSampler.for_mesh(V, resolution=16)
    cases = []
    for name in ("tex.grid", "tex.w0", "tex.b0", "tex.w1", "tex.b1"):
        def fo(x, name=name):
            b = field.bind(x.tape)
            b[name] = x
            # perturb geometry slightly so every regularizer term is active
            Vs = x.tape.const(V + 2e-3 * np.sin(np.arange(15).reshape(5, 3)))
            Ts = vertex_colors(field, b, Vs)
            total, _ = total_objective(Vs, Ts, F, V, mesh.T, stats, clf, 2, cfg, sampler,
                                       np.random.default_rng(seed))
            return total
        # grid gradients here are ~1e-8, so the grid gets a wider stencil to stay above round-off
        cases.append((f"objective.{name}", fo, field.params[name], 1e-3 if name.endswith("grid") else 1e-5))
    return cases


def run_suite(seed: int = 0, trials: int = 10, verbose: bool = False) -> list[tuple[str, float]]:
    rng = np.random.default_rng(seed)
    cases = op_checks(rng, trials) + field_checks(seed) + raster_checks(seed) + objective_checks(seed)
    results: dict[str, float] = {}
    t0 = time.time()
    for name, fn, x, *eps in cases:
        err = gt.finite_diff_check(fn, x, eps=eps[0] if eps else 1e-6)
        results[name] = max(results.get(name, 0.0), err)
        if verbose:
            print(f"{name:40s} {err:.2e}")
    if verbose:
        print(f"{len(cases)} checks in {time.time() - t0:.1f}s")
    return sorted(results.items())
