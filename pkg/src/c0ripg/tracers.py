"""Passive particles: point location, RK3 advection, per-cell occupancy."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .element import curl_of_scalar_basis, inverse_jacobians
from .mesh import TriangularMesh
from .space import ScalarField

LOCATE_TOL = 1e-12


def _barycentric(mesh: TriangularMesh, cells: np.ndarray, points: np.ndarray):
    """Reference coords of points (..., 2) in cells (...)."""
    jinv, _ = inverse_jacobians(mesh.jacobians()[cells])
    d = points - mesh.vertices[mesh.cells[cells, 0]]
    return np.einsum("...ij,...j->...i", jinv, d)


def _candidates(mesh: TriangularMesh, points: np.ndarray) -> np.ndarray:
    if mesh.shape is None:
        return np.broadcast_to(np.arange(mesh.n_cells), (len(points), mesh.n_cells))
    nx, ny = mesh.shape
    x0, x1, y0, y1 = mesh.bounds
    i = np.floor((points[:, 0] - x0) / (x1 - x0) * nx).astype(np.int64)
    j = np.floor((points[:, 1] - y0) / (y1 - y0) * ny).astype(np.int64)
    cand = []
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            ii = np.clip(i + di, 0, nx - 1)
            jj = np.clip(j + dj, 0, ny - 1)
            q = jj * nx + ii
            cand.extend([2 * q, 2 * q + 1])
    return np.stack(cand, axis=1)


def locate(points, mesh: TriangularMesh, tol: float = LOCATE_TOL):
    """Containing cell and reference coordinates for each point.

    Points on shared edges or vertices go to the lowest-index cell. Raises
    ``ValueError`` for points outside the mesh.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cells_out = np.empty(len(points), dtype=np.int64)
    ref_out = np.empty((len(points), 2))
    chunk = max(1, 2_000_000 // max(1, 18 if mesh.shape else mesh.n_cells))
    for s in range(0, len(points), chunk):
        pts = points[s:s + chunk]
        cand = _candidates(mesh, pts)
        ref = _barycentric(mesh, cand, pts[:, None, :])
        bary_min = np.minimum(1.0 - ref[..., 0] - ref[..., 1], ref.min(axis=-1))
        inside = bary_min >= -tol
        if not np.all(inside.any(axis=1)):
            bad = pts[~inside.any(axis=1)][0]
            raise ValueError(f"point {bad.tolist()} lies outside the mesh")
        key = np.where(inside, cand, np.iinfo(np.int64).max)
        pick = np.argmin(key, axis=1)
        rows = np.arange(len(pts))
        cells_out[s:s + chunk] = cand[rows, pick]
        ref_out[s:s + chunk] = ref[rows, pick]
    return cells_out, ref_out


@dataclass
class ParticleSet:
    positions: np.ndarray
    flagged: int = 0    # positions projected back from beyond the tolerance

    @property
    def count(self) -> int:
        return len(self.positions)

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.positions.copy(), self.flagged)


def equidistant_particles(n: int, bounds) -> ParticleSet:
    """``n x n`` particles at the centres of a uniform sub-grid."""
    x0, x1, y0, y1 = bounds
    s = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x0 + s * (x1 - x0), y0 + s * (y1 - y0))
    return ParticleSet(np.column_stack([X.ravel(), Y.ravel()]))


def velocity_at_points(phi: ScalarField, points: np.ndarray) -> np.ndarray:
    """``curl(phi)`` at physical points."""
    mesh = phi.dofmap.mesh
    cells, ref = locate(points, mesh)
    el = phi.dofmap.element
    jinv, _ = inverse_jacobians(mesh.jacobians()[cells])
    g_ref = np.einsum("ndk,nd->nk", el.gradients(ref), phi.local()[cells])
    return curl_of_scalar_basis(np.einsum("nk,nkj->nj", g_ref, jinv))


def _project(mesh: TriangularMesh, pts: np.ndarray, tol: float):
    x0, x1, y0, y1 = mesh.bounds
    clipped = np.column_stack([np.clip(pts[:, 0], x0, x1), np.clip(pts[:, 1], y0, y1)])
    far = np.abs(clipped - pts).max(axis=1) > tol * max(x1 - x0, y1 - y0)
    return clipped, int(far.sum())


def advect_rk3(particles: ParticleSet, phi: ScalarField, dt: float, n_steps: int,
               callback=None, tol: float = 1e-10) -> ParticleSet:
    """Advance particles with the three-stage SSP Runge-Kutta scheme.

    The velocity is the frozen field ``curl(phi)``. Stage positions that
    leave the domain are projected back onto it; departures larger than
    ``tol`` (relative to the domain size) are counted in ``flagged``.
    ``callback(step, particles)`` is called after every step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    mesh = phi.dofmap.mesh
    out = particles.copy()
    x = out.positions

    def v(pts):
        return velocity_at_points(phi, pts)

    for step in range(1, n_steps + 1):
        x1, f1 = _project(mesh, x + dt * v(x), tol)
        x2, f2 = _project(mesh, 0.75 * x + 0.25 * (x1 + dt * v(x1)), tol)
        x, f3 = _project(mesh, x / 3.0 + 2.0 / 3.0 * (x2 + dt * v(x2)), tol)
        out.flagged += f1 + f2 + f3
        out.positions = x
        if callback is not None:
            callback(step, out)
    return out


def occupancy_stats(particles: ParticleSet, mesh: TriangularMesh):
    """Mean and population standard deviation of particle counts per cell."""
    cells, _ = locate(particles.positions, mesh)
    counts = np.bincount(cells, minlength=mesh.n_cells).astype(float)
    return float(counts.mean()), float(counts.std())


def write_snapshot(path: str | Path, step: int, particles: ParticleSet, append=True) -> None:
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "w" if new else "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["step", "id", "x", "y"])
        for i, (x, y) in enumerate(particles.positions):
            w.writerow([step, i, f"{x:.17g}", f"{y:.17g}"])
