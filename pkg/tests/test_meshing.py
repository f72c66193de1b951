import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fieldadv.meshing import (TriMesh, colorize, decimate, extract_isosurface, lattice_points, marching_cubes,
                              mesh_stats, read_obj, write_obj)

from conftest import small_field

R = 0.6


def sphere_density(center=(0.05, -0.1, 0.0), r=R):
    c = np.asarray(center)
    return lambda p: np.where(np.linalg.norm(p - c, axis=1) < r, 50.0, 0.0)


def smooth_sphere(center=(0.05, -0.1, 0.0), r=R):
    c = np.asarray(center)
    # density decreasing through the iso level exactly at radius r
    return lambda p: 10.0 * (r - np.linalg.norm(p - c, axis=1)) + 5.0


def test_zero_density_empty():
    m = extract_isosurface(lambda p: np.zeros(len(p)), 16)
    assert m.n == 0 and m.m == 0


@pytest.mark.parametrize("density", [sphere_density(), smooth_sphere()])
def test_sphere_radial_error(density):
    m = extract_isosurface(density, 64, iso=5.0)
    diag = np.sqrt(3) * 2.0 / 64
    err = np.abs(np.linalg.norm(m.V - [0.05, -0.1, 0.0], axis=1) - R)
    assert err.max() <= diag
    assert m.signed_volume() > 0  # outward winding


def test_refinement_does_not_increase_error():
    c = np.array([0.05, -0.1, 0.0])
    errs = []
    for res in (16, 32, 64):
        m = extract_isosurface(smooth_sphere(), res, iso=5.0)
        errs.append(np.abs(np.linalg.norm(m.V - c, axis=1) - R).max())
    assert errs[1] <= errs[0] and errs[2] <= errs[1]


def test_cube_area():
    s = 1.1
    m = extract_isosurface(lambda p: np.where(np.abs(p).max(axis=1) < s / 2, 50.0, 0.0), 64, iso=5.0)
    assert abs(m.area() - 6 * s * s) <= 0.1 * 6 * s * s


def test_vertices_lie_on_sign_changing_lattice_edges(rng):
    res = 12
    lo, hi = np.full(3, -1.0), np.full(3, 1.0)
    vals = rng.normal(size=(res + 1,) * 3)
    m = marching_cubes(vals, lo, hi)
    cell = (hi - lo) / res
    g = (m.V - lo) / cell  # lattice coordinates
    frac = np.abs(g - np.round(g))
    off = frac > 1e-9
    # exactly one coordinate off-lattice (or the vertex sits on a lattice point)
    assert np.all(off.sum(axis=1) <= 1)
    for v, o in zip(g, off):
        if not o.any():
            continue
        ax = int(np.argmax(o))
        a = np.round(v).astype(int)
        a[ax] = int(np.floor(v[ax]))
        b = a.copy()
        b[ax] += 1
        va, vb = vals[a[2], a[1], a[0]], vals[b[2], b[1], b[0]]
        assert (va > 0) != (vb > 0)


def test_sphere_is_closed_manifold_euler():
    m = extract_isosurface(smooth_sphere(), 32, iso=5.0)
    st_ = mesh_stats(m)
    assert m.n - len(st_.edges) + m.m == 2
    # every edge shared by exactly two faces
    e = np.sort(np.concatenate([m.F[:, [0, 1]], m.F[:, [1, 2]], m.F[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    assert np.all(counts == 2)


def test_stats_single_triangle():
    s = mesh_stats(TriMesh(np.eye(3), [[0, 1, 2]]))
    assert len(s.edges) == 3
    assert all(len(n) == 2 for n in s.neighbors)


def test_stats_tetrahedron():
    V = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    s = mesh_stats(TriMesh(V, [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]))
    assert len(s.edges) == 6
    assert list(s.degree) == [3, 3, 3, 3]
    np.testing.assert_array_equal(s.bbox[0], 0)
    np.testing.assert_array_equal(s.bbox[1], 1)


def test_trimesh_validation():
    with pytest.raises(ValueError):
        TriMesh(np.zeros((3, 3)), [[0, 1, 3]])
    with pytest.raises(ValueError):
        TriMesh(np.zeros((3, 3)), [[0, 1, 1]])
    with pytest.raises(ValueError):
        TriMesh(np.zeros((3, 3)), [[0, 1, 2]], np.full((3, 3), 1.5))


def test_colorize(rng):
    f = small_field()
    m = extract_isosurface(smooth_sphere(), 16, iso=5.0)
    a, b = colorize(m, f), colorize(m, f)
    assert np.array_equal(a.T, b.T)
    assert a.T.min() >= 0 and a.T.max() <= 1
    for i in rng.choice(m.n, 10, replace=False):
        np.testing.assert_allclose(a.T[i], f.color_at(m.V[i][None])[0], atol=1e-15)
    f.params["tex.w1"][:] = 0.0
    f.params["tex.b1"][:] = 0.0
    np.testing.assert_allclose(colorize(m, f).T, 0.5, atol=1e-15)


def test_extract_field_untrained_is_empty():
    # an untrained field sits at softplus(0) = log 2, below the default level
    f = small_field(grid_scale=1e-4)
    f.params["geo.w1"][:] = 0.0
    assert extract_isosurface(f, 16).m == 0


def test_obj_round_trip(tmp_path, rng):
    m = extract_isosurface(smooth_sphere(), 16, iso=5.0)
    m = TriMesh(m.V, m.F, rng.random((m.n, 3)))
    p = write_obj(tmp_path / "a.obj", m)
    back = read_obj(p)
    assert np.abs(back.V - m.V).max() <= 1e-6 and np.abs(back.T - m.T).max() <= 1e-6
    assert np.array_equal(back.F, m.F)
    write_obj(tmp_path / "b.obj", back)
    assert (tmp_path / "a.obj").read_bytes() == (tmp_path / "b.obj").read_bytes()


def test_obj_without_colors_and_quads(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n")
    m = read_obj(p)
    assert m.T is None and m.m == 2


def test_decimate_reduces_faces():
    m = extract_isosurface(smooth_sphere(), 40, iso=5.0)
    d = decimate(m, m.m // 2)
    assert d.m <= m.m // 2
    assert np.abs(np.linalg.norm(d.V - [0.05, -0.1, 0.0], axis=1) - R).max() < 0.1


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 20))
def test_lattice_points_layout(res):
    p = lattice_points(res, (-1, -1, -1), (1, 1, 1))
    assert p.shape == ((res + 1) ** 3, 3)
    assert p[1, 0] > p[0, 0] and p[1, 1] == p[0, 1]  # x fastest
