"""Continuous Lagrange spaces: global DOF numbering, constraints, fields."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .element import inverse_jacobians, reference_element
from .mesh import BOUNDARY_TAGS, TriangularMesh


@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: TriangularMesh
    p: int
    cell_dofs: np.ndarray          # (nc, ndofs_per_cell)
    total_dofs: int
    node_coords: np.ndarray        # (total_dofs, 2)
    constrained_dofs: np.ndarray   # sorted global indices
    constraint_values: np.ndarray  # aligned with constrained_dofs

    @property
    def element(self):
        return reference_element(self.p)

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.total_dofs, dtype=bool)
        mask[self.constrained_dofs] = False
        return np.flatnonzero(mask)

    def facet_dofs(self, facets: np.ndarray) -> np.ndarray:
        """Global DOFs lying on the given facets (closed edges)."""
        m = self.mesh
        cells = m.facet_cells[facets, 0]
        local = m.facet_local[facets, 0]
        el = self.element
        table = np.array([el.edge_dofs(e) for e in range(3)])
        return np.unique(self.cell_dofs[cells[:, None], table[local]])


def build_space(mesh: TriangularMesh, p: int,
                dirichlet: Mapping[str, float | Callable] | None = None) -> DofMap:
    """Conforming degree-p numbering: vertices, then edges, then cell interiors.

    Edge DOFs are numbered along each facet starting from its lower global
    vertex, so both incident cells agree. ``dirichlet`` maps boundary tags
    to a constant or a callable ``g(x, y)``; DOFs on those facets (end
    vertices included) are constrained. Later tags win at shared corners.
    """
    if p < 1:
        raise ValueError("degree must be at least 1")
    el = reference_element(p)
    nv, nf, nc = mesh.n_vertices, mesh.n_facets, mesh.n_cells
    ne = p - 1
    ni = el.dof_count - 3 - 3 * ne

    cell_dofs = np.empty((nc, el.dof_count), dtype=np.int64)
    cell_dofs[:, :3] = mesh.cells
    k = np.arange(ne)
    for e in range(3):
        f = mesh.cell_facets[:, e]
        start = mesh.cells[:, (e + 1) % 3]
        forward = start == mesh.facets[f, 0]
        idx = np.where(forward[:, None], k[None, :], ne - 1 - k[None, :])
        cell_dofs[:, 3 + e * ne: 3 + (e + 1) * ne] = nv + f[:, None] * ne + idx
    base = nv + nf * ne
    cell_dofs[:, 3 + 3 * ne:] = base + np.arange(nc)[:, None] * ni + np.arange(ni)[None, :]
    total = base + nc * ni

    jac = mesh.jacobians()
    x0 = mesh.vertices[mesh.cells[:, 0]]
    phys = x0[:, None, :] + np.einsum("cij,nj->cni", jac, el.nodes)
    coords = np.empty((total, 2))
    coords[cell_dofs.ravel()] = phys.reshape(-1, 2)

    dofs: dict[int, float] = {}
    for tag, value in (dirichlet or {}).items():
        if tag not in BOUNDARY_TAGS:
            raise ValueError(f"unknown boundary tag {tag!r}")
        facets = mesh.facets_with_tag(tag)
        if len(facets) == 0:
            raise ValueError(f"boundary tag {tag!r} not present in mesh")
        tmp = DofMap(mesh, p, cell_dofs, total, coords, np.empty(0, int), np.empty(0))
        on = tmp.facet_dofs(facets)
        if callable(value):
            vals = np.broadcast_to(value(coords[on, 0], coords[on, 1]), on.shape)
        else:
            vals = np.full(len(on), float(value))
        dofs.update(zip(on.tolist(), np.asarray(vals, dtype=float).tolist()))
    idx = np.array(sorted(dofs), dtype=np.int64)
    vals = np.array([dofs[i] for i in idx], dtype=float)
    return DofMap(mesh, p, cell_dofs, total, coords, idx, vals)


class ScalarField:
    """Coefficient vector over a DofMap."""

    def __init__(self, dofmap: DofMap, coefficients=None):
        self.dofmap = dofmap
        if coefficients is None:
            coefficients = np.zeros(dofmap.total_dofs)
        self.coefficients = np.asarray(coefficients, dtype=float)
        if self.coefficients.shape != (dofmap.total_dofs,):
            raise ValueError("coefficient vector does not match the DOF map")

    @property
    def p(self) -> int:
        return self.dofmap.p

    def local(self) -> np.ndarray:
        """Coefficients gathered per cell, (nc, ndofs)."""
        return self.coefficients[self.dofmap.cell_dofs]

    def _tables(self, cells, ref, order):
        cells = np.asarray(cells)
        ref = np.broadcast_to(ref, cells.shape + np.shape(ref)[-2:])
        shared = ref.ndim == 3 and ref.strides[0] == 0
        flat = ref[0] if shared else ref.reshape(-1, 2)
        el = self.dofmap.element
        if order == 0:
            tab = el.values(flat)
        elif order == 1:
            tab = el.gradients(flat)
        else:
            tab = el.hessians(flat)
        if shared:
            return np.broadcast_to(tab, cells.shape + tab.shape)
        return tab.reshape(ref.shape[:-1] + tab.shape[1:])

    def at(self, cells, ref) -> np.ndarray:
        """Values at reference points ``ref`` (m, q, 2) of ``cells`` (m,)."""
        return np.einsum("mqd,md->mq", self._tables(cells, ref, 0), self.local()[cells])

    def grad_at(self, cells, ref) -> np.ndarray:
        """Physical gradients, (m, q, 2)."""
        jinv, _ = inverse_jacobians(self.dofmap.mesh.jacobians()[cells])
        g = np.einsum("mqdk,md->mqk", self._tables(cells, ref, 1), self.local()[cells])
        return np.einsum("mqk,mkj->mqj", g, jinv)

    def hess_at(self, cells, ref) -> np.ndarray:
        """Physical Hessians, (m, q, 2, 2)."""
        jinv, _ = inverse_jacobians(self.dofmap.mesh.jacobians()[cells])
        h = np.einsum("mqdkl,md->mqkl", self._tables(cells, ref, 2), self.local()[cells])
        return np.einsum("mki,mqkl,mlj->mqij", jinv, h, jinv, optimize=True)

    def evaluate(self, points, cells=None, ref=None) -> np.ndarray:
        """Point values; cells/reference coords are located if not given."""
        if cells is None:
            from .tracers import locate
            cells, ref = locate(np.atleast_2d(points), self.dofmap.mesh)
        vals = self.dofmap.element.values(ref)
        return np.einsum("nd,nd->n", vals, self.local()[cells])

    def to_csv(self, path: str | Path) -> None:
        """Nodal samples as (x, y, value)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for (x, y), v in zip(self.dofmap.node_coords, self.coefficients):
                w.writerow([f"{x:.17g}", f"{y:.17g}", f"{v:.17g}"])


class CellFunction:
    """Callable ``fn(cells, ref, xy)`` evaluated at reference points of cells.

    ``cells`` is (m,), ``ref`` and ``xy`` are (m, q, 2). Fields that are
    discontinuous across facets (e.g. strain-rate dependent viscosity) are
    evaluated from the side given by ``cells``.
    """

    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, cells, ref, xy):
        return self.fn(cells, ref, xy)

    @classmethod
    def from_xy(cls, fn: Callable) -> "CellFunction":
        def ev(cells, ref, xy):
            return np.asarray(fn(xy[..., 0], xy[..., 1]), dtype=float)
        return cls(ev)


def to_physical(mesh: TriangularMesh, cells, ref) -> np.ndarray:
    """Physical coordinates of reference points, (m, q, 2)."""
    cells = np.asarray(cells)
    ref = np.broadcast_to(ref, cells.shape + np.shape(ref)[-2:])
    x0 = mesh.vertices[mesh.cells[cells, 0]]
    return x0[:, None, :] + np.einsum("mij,mqj->mqi", mesh.jacobians()[cells], ref)


def interpolate(fn: Callable, space: DofMap) -> ScalarField:
    """Nodal interpolant of ``fn(x, y)``."""
    x, y = space.node_coords.T
    vals = np.broadcast_to(np.asarray(fn(x, y), dtype=float), x.shape)
    return ScalarField(space, np.array(vals))


def reduce_system(A: sp.spmatrix, b: np.ndarray, space: DofMap):
    """Eliminate constrained DOFs symmetrically.

    Returns the free-DOF block, the lifted right-hand side and the free DOF
    indices. Constraint values move to the right-hand side.
    """
    A = sp.csr_matrix(A)
    free = space.free_dofs
    fixed = space.constrained_dofs
    rhs = np.asarray(b, dtype=float)[free]
    if len(fixed):
        rhs = rhs - A[free][:, fixed] @ space.constraint_values
    return A[free][:, free].tocsc(), rhs, free


def expand(space: DofMap, free: np.ndarray, x_free: np.ndarray) -> np.ndarray:
    """Full coefficient vector from free values plus constraint values."""
    x = np.zeros(space.total_dofs)
    x[free] = x_free
    x[space.constrained_dofs] = space.constraint_values
    return x
