import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hestondg.mesh import Mesh, refine, refine_uniformly, uniform_mesh
from hestondg.model import Domain


def _check_conforming(m: Mesh):
    # every edge belongs to one or two triangles, boundary edges lie on the rectangle
    counts = np.bincount(m.triangle_edges.ravel(), minlength=m.n_edges)
    assert set(np.unique(counts)) <= {1, 2}
    assert np.array_equal(counts == 1, m.edge_elements[:, 1] < 0)
    assert np.all(m.edge_side[m.boundary_edges] >= 0)
    assert np.all(m.edge_side[m.interior_edges] == -1)
    # no hanging nodes: no vertex lies strictly inside an edge
    a = m.vertices[m.edges[:, 0]]
    b = m.vertices[m.edges[:, 1]]
    for vi, p in enumerate(m.vertices):
        t = np.einsum("ed,ed->e", p - a, b - a) / np.einsum("ed,ed->e", b - a, b - a)
        proj = a + t[:, None] * (b - a)
        on = (np.linalg.norm(proj - p, axis=1) < 1e-12) & (t > 1e-12) & (t < 1 - 1e-12)
        assert not np.any(on), f"hanging vertex {vi}"


def test_unit_square_single_cell(unit_square):
    m = uniform_mesh(unit_square, 1, 1)
    assert (m.n_triangles, m.n_vertices, m.n_edges) == (2, 4, 5)


def test_table1_grid():
    m = uniform_mesh(Domain(0, 4, -2, 2), 64, 64)
    assert m.n_triangles == 8192
    assert m.min_angle == pytest.approx(math.pi / 4)


@pytest.mark.parametrize("diagonal", ["main", "anti"])
def test_uniform_mesh_geometry(diagonal):
    d = Domain(0.0025, 0.559951, -5, 5)
    m = uniform_mesh(d, 5, 7, diagonal)
    assert m.n_triangles == 70
    assert np.all(m.areas > 0)
    assert m.areas.sum() == pytest.approx(d.area, rel=1e-12)
    _check_conforming(m)


def test_bad_arguments(unit_square):
    with pytest.raises(ValueError):
        uniform_mesh(unit_square, 0, 3)
    with pytest.raises(ValueError):
        uniform_mesh(unit_square, 2, 2, diagonal="cross")
    with pytest.raises(ValueError):
        Mesh(np.zeros((0, 2)), np.zeros((0, 3), dtype=int), unit_square)
    with pytest.raises(IndexError):
        refine(uniform_mesh(unit_square, 1, 1), [5])


def test_refine_empty_is_noop(unit_square):
    m = uniform_mesh(unit_square, 2, 2)
    assert refine(m, []) is m


def test_refine_all_doubles(unit_square):
    m = uniform_mesh(unit_square, 2, 3)
    r = refine(m, range(m.n_triangles))
    assert r.n_triangles >= 2 * m.n_triangles
    _check_conforming(r)


def test_closure_refines_neighbour(unit_square):
    m = uniform_mesh(unit_square, 1, 1)
    r = refine(m, [0])
    # the shared diagonal is bisected, so both halves split
    assert r.n_triangles == 4
    assert r.n_vertices == 5
    _check_conforming(r)


def test_neighbour_involution(unit_square):
    m = refine(uniform_mesh(unit_square, 3, 3), [0, 4, 7])
    for t in range(m.n_triangles):
        for le in range(3):
            n = m.neighbor(t, le)
            if n < 0:
                continue
            e = m.triangle_edges[t, le]
            back = [m.neighbor(n, j) for j in range(3) if m.triangle_edges[n, j] == e]
            assert back == [t]


def test_nesting_children_inside_parents(unit_square):
    m = uniform_mesh(unit_square, 2, 2)
    r = refine(m, [1, 3])
    parents = m.locate(r.centroids())
    assert np.all(parents >= 0)
    for c, p in zip(r.triangles, parents):
        # every child vertex lies in the closure of the parent
        tri = m.vertices[m.triangles[p]]
        for q in r.vertices[c]:
            e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
            lam = np.linalg.solve(np.stack([e1, e2], axis=1), q - tri[0])
            assert lam.min() > -1e-12 and lam.sum() < 1 + 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_random_refinement_invariants(seed):
    rng = np.random.default_rng(seed)
    d = Domain(0.0, 2.0, -1.0, 1.0)
    m = uniform_mesh(d, 2, 2, "anti" if seed % 2 else "main")
    theta0 = m.min_angle
    for _ in range(10):
        k = max(1, m.n_triangles // 5)
        m = refine(m, rng.choice(m.n_triangles, size=k, replace=False))
        assert m.areas.sum() == pytest.approx(d.area, rel=1e-12)
        assert np.all(m.areas > 0)
        assert m.min_angle >= 0.5 * theta0
    _check_conforming(m)


def test_locate_tie_break(unit_square):
    m = uniform_mesh(unit_square, 1, 1)
    # the diagonal is shared by both triangles: lowest id wins
    assert m.locate([[0.5, 0.5]])[0] == 0
    assert m.locate([[1.5, 0.5]])[0] == -1


def test_write_text(tmp_path, unit_square):
    m = uniform_mesh(unit_square, 2, 1)
    path = tmp_path / "mesh.txt"
    m.write_text(path)
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == m.n_vertices + m.n_triangles
    assert lines[m.n_vertices].split()[1:] == [str(i) for i in m.triangles[0]]
