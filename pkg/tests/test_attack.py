import json

import numpy as np
import pytest

from fieldadv.attack import (MODE_GROUPS, TRACE_COLUMNS, choose_target, clamp_geometry, export_adversarial,
                             read_trace, run_attack)
from fieldadv.classifiers import ConvClassifier
from fieldadv.fields import PARAM_GROUPS
from fieldadv.meshing import TriMesh, colorize, extract_isosurface, read_obj
from fieldadv.objective import AttackConfig, ObjectiveError

from conftest import small_field


@pytest.fixture(scope="module")
def scene():
    f = small_field(seed=2)
    mesh = extract_isosurface(lambda p: 10.0 * (0.6 - np.linalg.norm(p, axis=1)), 10)
    mesh = colorize(mesh, f)
    clf = ConvClassifier("gap", n_classes=4, resolution=16, seed=0)
    return f, mesh, clf


def cfg(**kw):
    base = dict(epochs=2, n_views=1, resolution=16, target=1, label=0, seed=3)
    base.update(kw)
    return AttackConfig(**base)


def test_zero_epochs_identity(scene):
    f, mesh, clf = scene
    res = run_attack(f, mesh, clf, cfg(epochs=0))
    assert np.array_equal(res.mesh_adv.V, mesh.V) and np.array_equal(res.mesh_adv.T, mesh.T)
    assert np.array_equal(res.mesh_adv.F, mesh.F) and res.trace == []


@pytest.mark.parametrize("mode", sorted(MODE_GROUPS))
def test_mode_partition(scene, mode):
    f, mesh, clf = scene
    before = {k: v.copy() for k, v in f.params.items()}
    V0, T0 = mesh.V.copy(), mesh.T.copy()
    res = run_attack(f, mesh, clf, cfg(mode=mode, geometry="tex"))
    # inputs untouched
    assert all(np.array_equal(f.params[k], before[k]) for k in before)
    assert np.array_equal(mesh.V, V0) and np.array_equal(mesh.T, T0)
    assert np.array_equal(res.mesh_adv.V, mesh.V)  # tex only: no offsets
    if mode == "mesh_based":
        assert res.field_adv is None
        assert not np.array_equal(res.mesh_adv.T, mesh.T)
        return
    chosen = set(MODE_GROUPS[mode])
    for k in PARAM_GROUPS["both_tex"] + PARAM_GROUPS["geo_all"]:
        same = np.array_equal(res.field_adv.params[k], before[k])
        assert same == (k not in chosen), k


def test_tex_geo_moves_vertices_within_clamp(scene):
    f, mesh, clf = scene
    c = cfg(epochs=3, lr_offset=0.5)
    res = run_attack(f, mesh, clf, c)
    d = np.linalg.norm(res.mesh_adv.V - mesh.V, axis=1)
    limit = c.clamp_fraction * np.linalg.norm(mesh.V.max(0) - mesh.V.min(0))
    assert d.max() > 0 and d.max() <= limit * (1 + 1e-12)


def test_trace_and_determinism(scene):
    f, mesh, clf = scene
    a = run_attack(f, mesh, clf, cfg(epochs=3))
    b = run_attack(f, mesh, clf, cfg(epochs=3))
    assert len(a.trace) == 3 and [r["epoch"] for r in a.trace] == [1, 2, 3]
    assert a.trace == b.trace and np.array_equal(a.mesh_adv.T, b.mesh_adv.T)
    assert all(np.isfinite(a.objective_trace()))


def test_target_rules(scene):
    f, mesh, clf = scene
    with pytest.raises(ValueError):
        run_attack(f, mesh, clf, AttackConfig(epochs=1, resolution=16))
    with pytest.raises(ValueError):
        run_attack(f, TriMesh(mesh.V, mesh.F), clf, cfg())
    rng = np.random.default_rng(0)
    picks = {choose_target(2, 6, rng) for _ in range(200)}
    assert picks == {0, 1, 3, 4, 5}


def test_non_finite_aborts(scene):
    f, mesh, clf = scene
    bad = f.copy()
    bad.params["tex.w1"][:] = np.nan
    with pytest.raises(ObjectiveError, match="epoch 0"), np.errstate(all="ignore"):
        run_attack(bad, mesh, clf, cfg(epochs=1))


def test_clamp_geometry(rng):
    z = np.zeros((4, 3))
    assert np.array_equal(clamp_geometry(z, 0.1), z)
    d = np.array([[0.0, 0.2, 0.0]])
    out = clamp_geometry(d, 0.1)
    assert abs(np.linalg.norm(out) - 0.1) <= 1e-15 and out[0, 1] > 0 and out[0, 0] == out[0, 2] == 0
    r = rng.normal(size=(100, 3))
    assert np.linalg.norm(clamp_geometry(r, 0.5), axis=1).max() <= 0.5 + 1e-15
    with pytest.raises(ValueError):
        clamp_geometry(r, 0.0)


def test_export(scene, tmp_path):
    f, mesh, clf = scene
    res = run_attack(f, mesh, clf, cfg(epochs=2))
    paths = export_adversarial(res, tmp_path / "run")
    back = read_obj(paths["mesh"])
    assert np.abs(back.V - res.mesh_adv.V).max() <= 1e-6 and np.abs(back.T - res.mesh_adv.T).max() <= 1e-6
    rows = read_trace(paths["trace"])
    assert len(rows) == 2 and tuple(rows[0]) == TRACE_COLUMNS
    assert rows[-1]["total"] == res.final["total"]
    doc = json.loads(paths["config"].read_text())
    assert doc["target"] == 1 and doc["epochs"] == 2
