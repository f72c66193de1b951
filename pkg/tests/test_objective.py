import math

import numpy as np
import pytest

from fieldadv import gradtape as gt
from fieldadv.camera import Camera, look_at
from fieldadv.gradcheck import TOL, objective_checks, quad_scene
from fieldadv.meshing import TriMesh, extract_isosurface, mesh_stats
from fieldadv.objective import (AttackConfig, TransformSample, TransformSpec, ViewSampler, cross_entropy,
                                eot_render, laplacian, r_cd, r_edge, r_lap, r_rgb, total_objective, total_regularizer)
from fieldadv.rasterizer import RenderSettings, rasterize


# -- naive oracles -----------------------------------------------------------

def ce_oracle(z, y):
    z = [float(v) for v in z]
    m = max(z)
    s = sum(math.exp(v - m) for v in z)
    return -(z[y] - m - math.log(s))


def rgb_oracle(A, C):
    tot = 0.0
    for v in range(A.shape[0]):
        for i in range(A.shape[1]):
            for j in range(A.shape[2]):
                for c in range(A.shape[3]):
                    tot += (A[v, i, j, c] - C[v, i, j, c]) ** 2
    return tot / A.shape[0]


def cd_oracle(A, B):
    def one(P, Q):
        return sum(min(sum((p[k] - q[k]) ** 2 for k in range(3)) for q in Q) for p in P) / len(P)
    return one(A, B) + one(B, A)


def lap_oracle(V, F):
    n = len(V)
    nb = [set() for _ in range(n)]
    for f in F:
        for a in range(3):
            for b in range(3):
                if a != b:
                    nb[f[a]].add(f[b])
    tot = 0.0
    for i in range(n):
        if not nb[i]:
            continue
        c = [sum(V[j][k] for j in nb[i]) / len(nb[i]) for k in range(3)]
        tot += sum((V[i][k] - c[k]) ** 2 for k in range(3))
    return tot / n


def edge_oracle(V, F):
    E = {tuple(sorted((f[a], f[(a + 1) % 3]))) for f in F for a in range(3)}
    return sum(sum((V[i][k] - V[j][k]) ** 2 for k in range(3)) for i, j in E) / len(E)


def random_mesh(rng):
    n = int(rng.integers(5, 15))
    V = rng.normal(size=(n, 3))
    F = np.array([rng.choice(n, 3, replace=False) for _ in range(int(rng.integers(3, 12)))])
    return TriMesh(V, F)


# -- cross entropy -------------------------------------------------------------

def test_ce_uniform():
    t = gt.Tape()
    assert abs(cross_entropy(t.const(np.zeros(10)), 3).value - math.log(10)) < 1e-15


def test_ce_monotone_limit():
    t = gt.Tape()
    vals = [cross_entropy(t.const(np.array([0.0, s, 1.0])), 1).value for s in (0, 2, 5, 10, 30, 60)]
    assert all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-20


def test_ce_oracle(rng):
    t = gt.Tape()
    for _ in range(100):
        z = rng.normal(size=int(rng.integers(2, 12))) * 3
        y = int(rng.integers(len(z)))
        assert abs(cross_entropy(t.const(z), y).value - ce_oracle(z, y)) <= 1e-12


def test_ce_errors():
    t = gt.Tape()
    with pytest.raises(ValueError):
        cross_entropy(t.const(np.zeros(1)), 0)
    with pytest.raises(ValueError):
        cross_entropy(t.const(np.zeros(4)), 4)


# -- regularizer oracles ---------------------------------------------------------

def test_rgb_examples():
    a = np.zeros((1, 4, 4, 3))
    b = a.copy()
    assert r_rgb(a, b).value == 0.0
    b[0, 2, 1, 0] = 0.5
    assert r_rgb(a, b).value == 0.25
    with pytest.raises(gt.ShapeError):
        r_rgb(a, np.zeros((1, 4, 5, 3)))


def test_rgb_oracle(rng):
    for _ in range(100):
        N, H = int(rng.integers(1, 4)), int(rng.integers(2, 6))
        A, C = rng.random((N, H, H, 3)), rng.random((N, H, H, 3))
        assert abs(r_rgb(A, C).value - rgb_oracle(A, C)) <= 1e-12
        # per-pixel mean reduction is the same sum over H*W*3
        assert abs(r_rgb(A, C, "mean").value - rgb_oracle(A, C) / (H * H * 3)) <= 1e-12


def test_cd_examples():
    assert r_cd(np.zeros((1, 3)), np.array([[1.0, 0, 0]])).value == 2.0
    V = np.random.default_rng(0).normal(size=(20, 3))
    assert r_cd(V, V).value == 0.0
    with pytest.raises(ValueError):
        r_cd(np.zeros((0, 3)), V)


def test_cd_oracle(rng):
    for _ in range(100):
        A = rng.normal(size=(int(rng.integers(1, 50)), 3))
        B = rng.normal(size=(int(rng.integers(1, 50)), 3))
        assert abs(r_cd(A, B).value - cd_oracle(A, B)) <= 1e-12


def test_lap_edge_oracles(rng):
    for _ in range(100):
        m = random_mesh(rng)
        st_ = mesh_stats(m)
        assert abs(r_lap(m.V, st_).value - lap_oracle(m.V, m.F)) <= 1e-12
        assert abs(r_edge(m.V, st_.edges).value - edge_oracle(m.V, m.F)) <= 1e-12


def test_lap_centroid_vertex_is_zero(rng):
    # hexagon fan: the hub sits at its neighbour centroid, the rim vertices do not
    ang = np.arange(6) * np.pi / 3
    V = np.concatenate([[[0.0, 0, 0]], np.stack([np.cos(ang), np.sin(ang), 0 * ang], 1)])
    F = np.array([[0, 1 + i, 1 + (i + 1) % 6] for i in range(6)])
    st_ = mesh_stats(TriMesh(V, F))
    L = laplacian(V, st_).value
    assert np.abs(L[0]).max() <= 1e-15 and np.abs(L[1:]).max() > 0.1
    # the offset form is zero on an unperturbed mesh
    assert r_lap(np.zeros_like(V), st_).value == 0.0


def test_translation_invariance(rng):
    m = random_mesh(rng)
    st_ = mesh_stats(m)
    shift = rng.normal(size=3)
    assert abs(r_lap(m.V + shift, st_).value - r_lap(m.V, st_).value) <= 1e-12
    P = m.V + 0.1 * rng.normal(size=m.V.shape)
    assert abs(r_cd(P + shift, m.V + shift).value - r_cd(P, m.V).value) <= 1e-12
    assert abs(r_edge(m.V + shift, st_.edges).value - r_edge(m.V, st_.edges).value) <= 1e-12


def test_edge_examples(rng):
    V = np.array([[0.0, 0, 0], [1, 0, 0], [0.5, math.sqrt(3) / 2, 0]])
    st_ = mesh_stats(TriMesh(V, [[0, 1, 2]]))
    assert abs(r_edge(V, st_.edges).value - 1.0) <= 1e-15
    assert abs(r_edge(3 * V, st_.edges).value - 9.0) <= 1e-12
    assert r_edge(V, np.zeros((0, 2), int)).value == 0.0


def test_nonnegative(rng):
    for _ in range(20):
        m = random_mesh(rng)
        st_ = mesh_stats(m)
        P = m.V + rng.normal(size=m.V.shape) * 0.1
        assert r_cd(P, m.V).value >= 0 and r_lap(P, st_).value >= 0 and r_edge(P, st_.edges).value >= 0


def test_total_regularizer(rng):
    m = random_mesh(rng)
    st_ = mesh_stats(m)
    imgs = rng.random((2, 4, 4, 3))
    tot, terms = total_regularizer(imgs, imgs, m.V, m.V, st_)
    assert tot.value == 0.0 and all(t.value == 0.0 for t in terms.values())
    P = m.V + rng.normal(size=m.V.shape)
    other = rng.random((2, 4, 4, 3))
    tot, _ = total_regularizer(imgs, other, P, m.V, st_, lambdas=(0, 0, 0, 0))
    assert tot.value == 0.0
    lam = (1.0, 3000.0, 1e-3, 1e-2)
    tot, terms = total_regularizer(imgs, other, P, m.V, st_, lam)
    expect = sum(l * terms[k].value for l, k in zip(lam, ("rgb", "cd", "lap", "edge")))
    assert abs(tot.value - expect) <= 1e-12 * max(1.0, expect)
    with pytest.raises(ValueError):
        total_regularizer(imgs, other, P, m.V, st_, (1, -1, 0, 0))


def test_default_weights():
    cfg = AttackConfig()
    assert cfg.lambdas == (1.0, 3000.0, 1e-3, 1e-2)
    assert cfg.beta == 1e3 and cfg.epochs == 250


# -- EOT -------------------------------------------------------------------------

def test_eot_identity_bit_identical(rng):
    V, F, _ = quad_scene()
    T = rng.random((5, 3))
    sampler = ViewSampler.for_mesh(V, resolution=32)
    img, cam, tr = eot_render(V, T, F, sampler, TransformSpec.identity(), np.random.default_rng(5))
    ref = rasterize(V, T, F, RenderSettings(cam)).value
    assert np.array_equal(img.value, ref)


def test_eot_contrast_one_and_constant_blur():
    t = gt.Tape()
    img = np.random.default_rng(0).random((16, 16, 3))
    assert np.array_equal(TransformSample().apply_2d(t.const(img)).value, img)
    const = np.full((16, 16, 3), 0.37)
    for k in (3, 5):
        np.testing.assert_allclose(TransformSample(blur=k).apply_2d(t.const(const)).value, const, atol=1e-15)


def test_transform_spec_contains_identity():
    with pytest.raises(ValueError):
        TransformSpec(contrast_range=(1.1, 1.3))
    with pytest.raises(ValueError):
        TransformSpec(blur_kernels=(3, 5))
    s = TransformSpec.identity().sample(np.random.default_rng(0))
    assert s.is_identity_3d and s.contrast == 1.0 and s.blur == 0


def test_view_sampler_keeps_object_in_frame():
    m = extract_isosurface(lambda p: 10.0 * (0.7 - np.linalg.norm(p, axis=1)), 24)
    s = ViewSampler.for_mesh(m.V, resolution=32)
    rng = np.random.default_rng(3)
    for cam in s.sample_many(50, rng):
        scr = cam.project(m.V)
        assert scr[:, :2].min() >= 0 and scr[:, :2].max() <= 32 and scr[:, 2].min() > 0


def test_attack_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(beta=-1)
    with pytest.raises(ValueError):
        AttackConfig(lambdas=(1, 1, -1, 1))
    with pytest.raises(ValueError):
        AttackConfig(target=2, label=2)
    with pytest.raises(ValueError):
        AttackConfig(mode="texture")
    c = AttackConfig(target=1, mode="grid_only")
    assert AttackConfig.from_dict(c.to_dict()) == c


# -- full objective -------------------------------------------------------------

class UniformClassifier:
    def __init__(self, k=10):
        self.k = k

    def logits(self, img):
        return gt.sum(img) * np.zeros(self.k)


def test_objective_beta_zero_uniform_is_ln10(rng):
    V, F, _ = quad_scene()
    T = rng.random((5, 3))
    st_ = mesh_stats(TriMesh(V, F))
    cfg = AttackConfig(beta=0.0, n_views=3, resolution=16, target=4)
    tape = gt.Tape()
    Va = tape.leaf(V + 0.05 * rng.normal(size=V.shape))
    tot, parts = total_objective(Va, tape.leaf(T), F, V, T, st_, UniformClassifier(), 4, cfg,
                                 ViewSampler.for_mesh(V, resolution=16), rng)
    assert abs(tot.value - math.log(10)) <= 1e-12


def test_objective_clean_is_mean_lf(rng):
    V, F, _ = quad_scene()
    T = rng.random((5, 3))
    st_ = mesh_stats(TriMesh(V, F))
    cfg = AttackConfig(n_views=2, resolution=16, target=1)
    tape = gt.Tape()
    tot, parts = total_objective(tape.leaf(V), tape.leaf(T), F, V, T, st_, UniformClassifier(4), 1, cfg,
                                 ViewSampler.for_mesh(V, resolution=16), rng)
    assert parts["R_rgb"] == parts["R_cd"] == parts["R_lap"] == parts["R_edge"] == 0.0
    assert tot.value == parts["L_f"]


@pytest.mark.parametrize("case", objective_checks(0), ids=lambda c: c[0] if isinstance(c, tuple) else "")
def test_objective_gradcheck(case):
    name, fn, x, eps = case
    assert gt.finite_diff_check(fn, x, eps=eps) <= TOL
