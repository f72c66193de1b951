import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fieldadv import gradtape as gt
from fieldadv.fields import (PARAM_GROUPS, FieldConfig, GridConfig, HashGrid, RadianceField, grid_encode,
                             param_count, param_partition)
from fieldadv.optim import Adam

from conftest import small_field


def _encode(grid, table, x):
    return grid_encode(grid, gt.Tape().leaf(table), np.atleast_2d(x)).value


def test_default_config_matches_reference_sizes():
    g = HashGrid(GridConfig(), (-1, -1, -1), (1, 1, 1))
    assert list(g.resolutions) == [16, 24, 36, 54, 81, 121, 182, 273]
    assert g.param_shape == (8, 2 ** 15, 2)
    # 16^3-ish levels fit densely, finer ones hash
    assert list(g.dense) == [1, 1, 0, 0, 0, 0, 0, 0]


def test_lattice_vertex_returns_stored_feature(rng):
    cfg = GridConfig(num_levels=2, base_resolution=4, per_level_scale=2.0, table_size_log2=9)
    g = HashGrid(cfg, (-1, -1, -1), (1, 1, 1))
    table = rng.normal(size=g.param_shape)
    for level in range(2):
        res = int(g.resolutions[level])
        ijk = (1, 2, 3)
        x = -1.0 + 2.0 * np.array(ijk) / res
        feat = _encode(g, table, x)[0, 2 * level:2 * level + 2]
        np.testing.assert_allclose(feat, table[level, g.vertex_index(level, ijk)], atol=1e-12)


def test_lattice_vertex_hashed_level(rng):
    # level 1 (res 8, 729 vertices) is hashed into 2^6 slots; a vertex still reads its own slot
    cfg = GridConfig(num_levels=2, base_resolution=2, per_level_scale=4.0, table_size_log2=6)
    g = HashGrid(cfg, (-1, -1, -1), (1, 1, 1))
    assert not g.dense[1]
    table = rng.normal(size=g.param_shape)
    ijk = (3, 5, 2)
    x = -1.0 + 2.0 * np.array(ijk) / g.resolutions[1]
    np.testing.assert_allclose(_encode(g, table, x)[0, 2:4], table[1, g.vertex_index(1, ijk)], atol=1e-12)


def test_zero_table_zero_feature(rng):
    g = HashGrid(GridConfig(), (-1, -1, -1), (1, 1, 1))
    out = _encode(g, np.zeros(g.param_shape), rng.uniform(-1, 1, size=(50, 3)))
    assert np.array_equal(out, np.zeros_like(out))


def test_affine_along_axis_inside_cell(rng):
    cfg = GridConfig(num_levels=1, base_resolution=4, per_level_scale=1.0, table_size_log2=8)
    g = HashGrid(cfg, (-1, -1, -1), (1, 1, 1))
    table = rng.normal(size=g.param_shape)
    # cell [0, 0.5] in x at res 4; keep y, z fixed
    a, b = np.array([0.05, 0.1, -0.3]), np.array([0.45, 0.1, -0.3])
    fa, fb, fm = (_encode(g, table, p)[0] for p in (a, b, 0.5 * (a + b)))
    np.testing.assert_allclose(fm, 0.5 * (fa + fb), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.tuples(*[st.floats(-1.0, 1.0)] * 3), st.integers(0, 7))
def test_corner_weights_partition_of_unity(p, level):
    g = HashGrid(GridConfig(), (-1, -1, -1), (1, 1, 1))
    _, w = g.corner_weights(np.array(p), level)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all(w >= -1e-15)


def test_hash_is_pure():
    g1 = HashGrid(GridConfig(), (-1, -1, -1), (1, 1, 1))
    g2 = HashGrid(GridConfig(), (-1, -1, -1), (1, 1, 1))
    for lvl in range(8):
        for ijk in ((0, 0, 0), (5, 17, 3), (100, 2, 250)):
            r = g1.resolutions[lvl]
            ijk = tuple(min(v, r) for v in ijk)
            assert g1.vertex_index(lvl, ijk) == g2.vertex_index(lvl, ijk)
    # known value of the spatial hash
    assert g1.vertex_index(2, (1, 1, 1)) == (1 ^ 2654435761 ^ 805459861) % 2 ** 15


def test_zero_final_layer_constants(rng):
    f = small_field()
    f.params["geo.w1"][:] = 0.0
    f.params["geo.b1"][:] = 0.0
    f.params["tex.w1"][:] = 0.0
    f.params["tex.b1"][:] = 0.0
    x = rng.uniform(-1, 1, size=(40, 3))
    np.testing.assert_allclose(f.density_at(x), np.log(2.0), atol=1e-15)
    np.testing.assert_allclose(f.color_at(x), 0.5, atol=1e-15)


def test_color_range_random_params(rng):
    for t in range(1000 // 100):
        f = RadianceField(FieldConfig(GridConfig(2, 4, 2.0, 8), GridConfig(2, 4, 2.0, 8), hidden=8), seed=t)
        for k, v in f.params.items():
            f.params[k] = rng.normal(scale=5.0, size=v.shape)
        c = f.color_at(rng.uniform(-1.2, 1.2, size=(100, 3)))
        assert c.min() >= 0.0 and c.max() <= 1.0
        assert np.all(f.density_at(rng.uniform(-1, 1, size=(20, 3))) >= 0.0)


def test_color_has_no_geometry_gradient(field, rng):
    t = gt.Tape()
    b = field.bind(t, field.params.keys())
    y = gt.sum(field.color(rng.uniform(-1, 1, size=(20, 3)), b))
    g = t.backward(y)
    for k in PARAM_GROUPS["geo_all"]:
        assert np.array_equal(g.get(b[k].node_id, 0.0) * np.ones_like(field.params[k]),
                              np.zeros_like(field.params[k]))


@pytest.mark.parametrize("name", PARAM_GROUPS["geo_all"])
def test_density_gradcheck(field, rng, name):
    pts = rng.uniform(-0.9, 0.9, size=(5, 3))
    w = rng.uniform(-1, 1, size=5)

    def f(x):
        b = field.bind(x.tape)
        b[name] = x
        return gt.sum(field.density(pts, b) * w)
    assert gt.finite_diff_check(f, field.params[name], eps=1e-6) <= 1e-4


@pytest.mark.parametrize("name", PARAM_GROUPS["both_tex"])
def test_color_gradcheck(field, rng, name):
    pts = rng.uniform(-0.9, 0.9, size=(5, 3))
    w = rng.uniform(-1, 1, size=(5, 3))

    def f(x):
        b = field.bind(x.tape)
        b[name] = x
        return gt.sum(field.color(pts, b) * w)
    assert gt.finite_diff_check(f, field.params[name], eps=1e-6) <= 1e-4


def test_point_gradient_matches_fd(field, rng):
    pts = rng.uniform(-0.8, 0.8, size=(4, 3))

    def f(x):
        b = field.bind(x.tape)
        return gt.sum(field.color(x, b))
    assert gt.finite_diff_check(f, pts, eps=1e-7) <= 1e-4


def test_partitions(field):
    g, m = param_partition(field, "grid_tex"), param_partition(field, "mlp_tex")
    assert not set(g) & set(m)
    assert param_count(param_partition(field, "both_tex")) == param_count(g) + param_count(m)
    assert not set(param_partition(field, "geo_all")) & set(param_partition(field, "both_tex"))
    with pytest.raises(ValueError):
        param_partition(field, "everything")


def test_grid_step_leaves_mlp_bit_identical(field, rng):
    before = {k: field.params[k].copy() for k in PARAM_GROUPS["mlp_tex"]}
    grid_before = field.params["tex.grid"].copy()
    opt = Adam(param_partition(field, "grid_tex"), 1e-2)
    t = gt.Tape()
    b = field.bind(t, PARAM_GROUPS["grid_tex"])
    g = t.backward(gt.sum(field.color(rng.uniform(-1, 1, size=(30, 3)), b)))
    opt.step({"tex.grid": g[b["tex.grid"].node_id]})
    assert not np.array_equal(grid_before, field.params["tex.grid"])
    for k, v in before.items():
        assert np.array_equal(v, field.params[k])


def test_checkpoint_round_trip(tmp_path, field, rng):
    p = tmp_path / "f.bin"
    field.save(p)
    g = RadianceField.load(p)
    for k in field.params:
        assert np.array_equal(field.params[k], g.params[k])
    x = rng.uniform(-1, 1, size=(10, 3))
    assert np.array_equal(field.color_at(x), g.color_at(x))
    g.save(tmp_path / "g.bin")
    assert p.read_bytes() == (tmp_path / "g.bin").read_bytes()


def test_outside_box_is_empty(field):
    x = np.array([[1.5, 0.0, 0.0], [0.0, -2.0, 0.3]])
    assert np.array_equal(field.density_at(x), np.zeros(2))
