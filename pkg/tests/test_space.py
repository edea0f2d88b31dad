import numpy as np
import pytest

from c0ripg.element import interval_rule, triangle_rule
from c0ripg.mesh import build_structured
from c0ripg.ripg import facet_sides
from c0ripg.space import (ScalarField, build_space, expand, interpolate, reduce_system,
                          to_physical)
from c0ripg.tracers import locate

WALLS = ("bottom", "top", "left", "right")
RNG = np.random.default_rng(7)


def test_dof_count_two_cells():
    m = build_structured(((0, 1), (0, 1)), 1)
    V = build_space(m, 2)
    assert V.total_dofs == 4 + 5
    assert len(V.constrained_dofs) == 0
    W = build_space(m, 2, {t: 0.0 for t in WALLS})
    assert len(W.constrained_dofs) == 8
    # the one free DOF is the midpoint of the diagonal
    np.testing.assert_allclose(W.node_coords[W.free_dofs], [[0.5, 0.5]])


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_dof_count_formula(p):
    N = 3
    m = build_structured(((0, 1), (0, 1)), N)
    V = build_space(m, p)
    assert V.total_dofs == (p * N + 1) ** 2


def test_temperature_constraints():
    m = build_structured(((0, 1), (0, 1)), 4)
    S = build_space(m, 3, {"bottom": 0.0, "top": 1.0})
    y = S.node_coords[S.constrained_dofs, 1]
    assert set(np.unique(y)) == {0.0, 1.0}
    np.testing.assert_array_equal(S.constraint_values, y)
    # callable data
    S2 = build_space(m, 2, {"left": lambda x, y: 2 * y})
    np.testing.assert_allclose(S2.constraint_values, 2 * S2.node_coords[S2.constrained_dofs, 1])


def test_bad_tags():
    m = build_structured(((0, 1), (0, 1)), 2)
    with pytest.raises(ValueError):
        build_space(m, 2, {"north": 0.0})


@pytest.mark.parametrize("p", [2, 3])
def test_conformity_and_node_coords(p):
    m = build_structured(((0, 2), (-1, 1)), 3)
    V = build_space(m, p)
    el = V.element
    # each cell's DOF coordinates agree with the mapped reference nodes
    phys = to_physical(m, np.arange(m.n_cells), el.nodes)
    np.testing.assert_allclose(V.node_coords[V.cell_dofs], phys, atol=1e-14)
    # C0: values match across every interior facet, normal derivatives need not
    f = interpolate(lambda x, y: np.sin(3 * x) * np.exp(y), V)
    f.coefficients += 0.01 * RNG.standard_normal(V.total_dofs)
    sides = facet_sides(V, m.interior_facets, interval_rule(2 * p))
    a = f.at(sides[0].cells, sides[0].ref)
    b = f.at(sides[1].cells, sides[1].ref)
    np.testing.assert_allclose(sides[0].xy, sides[1].xy, atol=1e-14)
    assert np.abs(a - b).max() <= 1e-12
    ga = np.einsum("mqk,mk->mq", f.grad_at(sides[0].cells, sides[0].ref), sides[0].normal)
    gb = np.einsum("mqk,mk->mq", f.grad_at(sides[1].cells, sides[1].ref), sides[0].normal)
    assert np.abs(ga - gb).max() > 1e-6


def test_interpolation_constant_and_linear():
    m = build_structured(((0, 1), (0, 1)), 3)
    V = build_space(m, 2)
    assert np.all(interpolate(lambda x, y: 1.0, V).coefficients == 1.0)
    f = interpolate(lambda x, y: x + y, V)
    pts = RNG.random((200, 2))
    np.testing.assert_allclose(f.evaluate(pts), pts.sum(axis=1), atol=1e-12)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_polynomial_reproduction(p):
    m = build_structured(((-1, 1), (0, 1)), 2)
    V = build_space(m, p)
    poly = lambda x, y: (x - 0.3 * y) ** p + x * y - 2.0
    f = interpolate(poly, V)
    pts = RNG.random((100, 2)) * [2, 1] - [1, 0]
    np.testing.assert_allclose(f.evaluate(pts), poly(*pts.T), atol=1e-11)
    cells, ref = locate(pts, m)
    H = f.hess_at(cells, ref[:, None])
    hxx = p * (p - 1) * (pts[:, 0] - 0.3 * pts[:, 1]) ** (p - 2)
    np.testing.assert_allclose(H[:, 0, 0, 0], hxx, atol=1e-9)


def _l2_interp_error(N, p):
    fn = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y) / np.pi
    m = build_structured(((-1, 1), (-1, 1)), N)
    f = interpolate(fn, build_space(m, p))
    rule = triangle_rule(2 * p + 4)
    cells = np.arange(m.n_cells)
    ref = np.broadcast_to(rule.points, (m.n_cells,) + rule.points.shape)
    xy = to_physical(m, cells, ref)
    e = f.at(cells, ref) - fn(xy[..., 0], xy[..., 1])
    return np.sqrt(np.sum(2 * m.cell_area[:, None] * rule.weights * e ** 2))


def test_interpolation_rate_p3():
    ratio = _l2_interp_error(16, 3) / _l2_interp_error(32, 3)
    assert ratio == pytest.approx(16.0, rel=0.1)


def test_reduce_and_expand_roundtrip():
    import scipy.sparse as sp
    m = build_structured(((0, 1), (0, 1)), 2)
    S = build_space(m, 2, {"bottom": 0.0, "top": 1.0})
    n = S.total_dofs
    A = sp.random(n, n, density=0.3, random_state=1) + sp.eye(n) * n
    x = RNG.random(n)
    x[S.constrained_dofs] = S.constraint_values
    A_ff, rhs, free = reduce_system(A, A @ x, S)
    x_free = np.linalg.solve(A_ff.toarray(), rhs)
    np.testing.assert_allclose(expand(S, free, x_free), x, atol=1e-12)


def test_field_shape_check_and_csv(tmp_path):
    m = build_structured(((0, 1), (0, 1)), 1)
    V = build_space(m, 2)
    with pytest.raises(ValueError):
        ScalarField(V, np.zeros(3))
    f = interpolate(lambda x, y: x * y, V)
    f.to_csv(tmp_path / "f.csv")
    data = np.loadtxt(tmp_path / "f.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(data[:, 2], data[:, 0] * data[:, 1])
