import csv

import numpy as np
import pytest

from c0ripg.heat import CASES, solve_steady
from c0ripg.mesh import build_structured
from c0ripg.space import ScalarField, build_space, interpolate, to_physical
from c0ripg.tracers import (ParticleSet, advect_rk3, equidistant_particles, locate,
                            occupancy_stats, velocity_at_points, write_snapshot)

SQUARE = ((-1, 1), (-1, 1))


def test_locate_examples():
    m = build_structured(((0, 1), (0, 1)), 4)
    c, _ = locate(m.centroids()[:1], m)
    assert c[0] == 0
    # interior vertex (0.25, 0.25) is shared by six cells
    c, ref = locate([[0.25, 0.25]], m)
    incident = np.flatnonzero(np.any(np.all(np.isclose(m.vertices[m.cells], [0.25, 0.25]), axis=-1), axis=1))
    assert len(incident) == 6 and c[0] == incident.min()
    with pytest.raises(ValueError):
        locate([[1.5, 0.5]], m)


def test_locate_round_trip():
    m = build_structured(SQUARE, 7)
    pts = np.random.default_rng(5).uniform(-1, 1, (10_000, 2))
    cells, ref = locate(pts, m)
    back = to_physical(m, cells, ref[:, None])[:, 0]
    assert np.abs(back - pts).max() <= 1e-12
    assert ref.min() >= -1e-12 and (1 - ref.sum(axis=1)).min() >= -1e-12


def _rotation(N=4):
    m = build_structured(SQUARE, N)
    # phi = (x^2 + y^2) / 2 gives u = (y, -x), a clockwise rigid rotation
    return interpolate(lambda x, y: 0.5 * (x * x + y * y), build_space(m, 2))


def test_rotation_velocity_exact():
    phi = _rotation()
    pts = np.random.default_rng(1).uniform(-1, 1, (50, 2))
    np.testing.assert_allclose(velocity_at_points(phi, pts), np.column_stack([pts[:, 1], -pts[:, 0]]),
                               atol=1e-12)


def test_rk3_order_in_rotation():
    phi = _rotation()
    x0 = np.array([[0.5, 0.0]])
    t_end = 1.0
    exact = np.array([[0.5 * np.cos(t_end), -0.5 * np.sin(t_end)]])
    errs, dts = [], []
    for n in (10, 20, 40, 80):
        out = advect_rk3(ParticleSet(x0.copy()), phi, t_end / n, n)
        errs.append(np.linalg.norm(out.positions - exact))
        dts.append(t_end / n)
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.2)


def test_zero_velocity_and_callback():
    m = build_structured(SQUARE, 4)
    phi = ScalarField(build_space(m, 2))
    ps = equidistant_particles(8, m.bounds)
    seen = []
    out = advect_rk3(ps, phi, 0.1, 3, callback=lambda k, p: seen.append((k, occupancy_stats(p, m))))
    np.testing.assert_array_equal(out.positions, ps.positions)
    assert [k for k, _ in seen] == [1, 2, 3]
    assert len({s for _, s in seen}) == 1
    with pytest.raises(ValueError):
        advect_rk3(ps, phi, 0.0, 1)


def test_occupancy_examples():
    m = build_structured(SQUARE, 8)
    mean, std = occupancy_stats(equidistant_particles(256, m.bounds), m)
    assert mean == 512.0
    # each quad holds 32 x 32 particles; the 32 on its diagonal go to the lower
    # (below-diagonal) cell, so counts are 528 and 496 and the std is exactly 16
    assert std == pytest.approx(16.0, abs=1e-12)
    M, count = m.n_cells, 1000
    one_cell = ParticleSet(np.tile([[-0.95, -0.99]], (count, 1)))
    mean, std = occupancy_stats(one_cell, m)
    assert mean == pytest.approx(count / M)
    assert std == pytest.approx(count * np.sqrt(M - 1) / M, rel=1e-12)


def test_projection_flags_escapes():
    # a strong uniform flow through the wall: u = (1, 0) from phi = y
    m = build_structured(SQUARE, 2)
    phi = interpolate(lambda x, y: y, build_space(m, 2))
    out = advect_rk3(ParticleSet(np.array([[0.9, 0.0]])), phi, 0.5, 1)
    assert out.positions[0, 0] == 1.0 and out.flagged > 0


@pytest.fixture(scope="module")
def bb1a_coarse():
    return solve_steady(CASES["BB1a"], build_structured(((0, 1), (0, 1)), 16), 2)


def test_boundary_particle_stays_on_boundary(bb1a_coarse):
    pts = np.array([[0.0, 0.3], [1.0, 0.6], [0.4, 0.0], [0.7, 1.0]])
    # short enough that no particle reaches a corner, where finite steps overshoot
    out = advect_rk3(ParticleSet(pts.copy()), bb1a_coarse.phi, 1e-3, 8)
    x, y = out.positions.T
    wall_distance = np.minimum.reduce([x, 1 - x, y, 1 - y])
    assert np.abs(wall_distance).max() <= 1e-12
    assert out.flagged == 0
    # and the particles did move along the walls
    assert np.abs(out.positions - pts).max() > 1e-3


def test_snapshot_csv(tmp_path):
    ps = ParticleSet(np.array([[0.1, 0.2], [0.3, 0.4]]))
    path = tmp_path / "snap.csv"
    write_snapshot(path, 0, ps)
    write_snapshot(path, 1, ps)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "id", "x", "y"] and len(rows) == 5
    assert rows[-1][:2] == ["1", "1"]
