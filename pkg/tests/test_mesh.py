import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from c0ripg.mesh import (BOUNDARY_TAGS, INTERIOR, build_structured, classify_facets,
                         from_cells)


def test_single_quad():
    m = build_structured(((0, 1), (0, 1)), 1)
    assert m.n_cells == 2 and m.n_facets == 5
    interior, exterior = classify_facets(m)
    assert len(interior) == 1 and len(exterior) == 4
    assert m.cell_area.sum() == pytest.approx(1.0, rel=1e-12)


def test_cell_count_and_area_on_symmetric_square():
    m = build_structured(((-1, 1), (-1, 1)), 8)
    assert m.n_cells == 128
    assert m.cell_area.sum() == pytest.approx(4.0, rel=1e-12)


def test_interior_facet_count_by_brute_force():
    m = build_structured(((0, 1), (0, 1)), 2)
    shared = 0
    for a, b in itertools.combinations(range(m.n_cells), 2):
        if len(set(m.cells[a]) & set(m.cells[b])) == 2:
            shared += 1
    assert shared == 8
    assert len(m.interior_facets) == 8
    assert len(m.exterior_facets) == 8


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        build_structured(((0, 1), (0, 1)), 0)
    with pytest.raises(ValueError):
        build_structured(((0, 0), (0, 1)), 2)


def test_diagonal_and_cell_numbering():
    m = build_structured(((0, 1), (0, 1)), 2)
    # cell 0 sits below the diagonal of the bottom-left quad
    np.testing.assert_allclose(m.centroids()[0], [1 / 3, 1 / 6])
    np.testing.assert_allclose(m.centroids()[1], [1 / 6, 1 / 3])
    np.testing.assert_allclose(m.centroids()[2], [1 / 2 + 1 / 3, 1 / 6])


@given(N=st.integers(1, 9), w=st.floats(0.2, 5.0), hgt=st.floats(0.2, 5.0))
@settings(max_examples=25, deadline=None)
def test_invariants(N, w, hgt):
    m = build_structured(((0.0, w), (-1.0, -1.0 + hgt)), N)
    assert m.cell_area.sum() == pytest.approx(w * hgt, rel=1e-12)
    assert np.all(m.cell_area > 0)
    # Euler relation for a disc
    assert m.n_vertices - m.n_facets + m.n_cells == 1
    interior, exterior = classify_facets(m)
    assert len(interior) + len(exterior) == m.n_facets
    assert len(np.intersect1d(interior, exterior)) == 0
    np.testing.assert_allclose(m.facet_normal[interior, 0], -m.facet_normal[interior, 1],
                               atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(m.facet_normal[:, 0], axis=1), 1.0)
    assert np.all(m.facet_cells[exterior, 1] == -1)
    assert np.all(m.facet_tag[exterior] != INTERIOR)
    assert np.all(m.facet_tag[interior] == INTERIOR)
    assert len(exterior) == 4 * N
    assert np.all(m.facet_cells[interior, 0] < m.facet_cells[interior, 1])
    # outward normals
    for side in (0, 1):
        fs = interior if side else np.arange(m.n_facets)
        c = m.facet_cells[fs, side]
        d = m.facet_midpoints()[fs] - m.centroids()[c]
        assert np.all(np.einsum("ij,ij->i", m.facet_normal[fs, side], d) > 0)


def test_facet_length_matches_both_sides():
    m = build_structured(((0, 2), (0, 1)), 4)
    for f in m.interior_facets[:20]:
        for side in (0, 1):
            c, e = m.facet_cells[f, side], m.facet_local[f, side]
            a, b = m.cells[c, (e + 1) % 3], m.cells[c, (e + 2) % 3]
            assert np.linalg.norm(m.vertices[a] - m.vertices[b]) == m.facet_length[f]
            assert m.cell_facets[c, e] == f


def test_boundary_tags():
    m = build_structured(((0, 1), (0, 1)), 3)
    mid = m.facet_midpoints()
    for code, name in enumerate(BOUNDARY_TAGS):
        fs = m.facets_with_tag(name)
        assert len(fs) == 3
        assert np.all(m.facet_tag[fs] == code)
    np.testing.assert_allclose(mid[m.facets_with_tag("bottom"), 1], 0.0)
    np.testing.assert_allclose(mid[m.facets_with_tag("right"), 0], 1.0)
    np.testing.assert_allclose(m.facet_normal[m.facets_with_tag("top"), 0], [[0, 1]] * 3)


def test_from_cells_reorients_and_rejects_degenerate():
    v = [[0, 0], [1, 0], [1, 1], [0, 1]]
    m = from_cells(v, [[0, 2, 1], [0, 2, 3]])
    np.testing.assert_array_equal(m.cell_area, [0.5, 0.5])
    assert tuple(m.cells[0]) == (0, 1, 2)
    assert tuple(m.cells[1]) == (0, 2, 3)
    with pytest.raises(ValueError):
        from_cells([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])


def test_csv_export(tmp_path):
    m = build_structured(((0, 1), (0, 1)), 2)
    m.to_csv(tmp_path)
    v = np.loadtxt(tmp_path / "vertices.csv", delimiter=",", skiprows=1)
    assert v.shape[0] == m.n_vertices
