"""C0 interior penalty assembly for the stream-function Stokes problem.

The unknown is a continuous degree-p stream function ``phi`` with velocity
``u = curl(phi) = (d phi/dy, -d phi/dx)``. Continuity of ``u`` across facets
is imposed weakly with robust (viscosity- and geometry-weighted) averages and
a closed-form penalty, so no tuning constant other than ``delta`` remains.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp

from .element import (curl_of_scalar_basis, edge_points, interval_rule,
                      inverse_jacobians, reference_element, triangle_rule)
from .linalg import CholeskyFactor, assemble_csr, weighted_gram
from .mesh import TriangularMesh
from .space import CellFunction, DofMap, ScalarField, expand, reduce_system, to_physical

COERCIVITY_THRESHOLD = math.sqrt(2.0)


class ViscosityField(CellFunction):
    """Positive viscosity evaluated at reference points of cells."""

    @classmethod
    def constant(cls, value: float) -> "ViscosityField":
        return cls(lambda cells, ref, xy: np.full(xy.shape[:-1], float(value)))

    @classmethod
    def from_function(cls, fn: Callable) -> "ViscosityField":
        return cls(CellFunction.from_xy(fn).fn)

    def sample(self, cells, ref, xy) -> np.ndarray:
        mu = np.asarray(self(cells, ref, xy), dtype=float)
        if not np.all(np.isfinite(mu)):
            raise FloatingPointError("non-finite viscosity sample")
        if np.any(mu <= 0):
            raise ValueError("viscosity must be strictly positive")
        return np.broadcast_to(mu, xy.shape[:-1])


def strain_from_hessian(H: np.ndarray) -> np.ndarray:
    """Symmetric gradient of ``curl(phi)`` from the Hessian of ``phi``."""
    hxx, hxy, hyy = H[..., 0, 0], H[..., 0, 1], H[..., 1, 1]
    off = 0.5 * (hyy - hxx)
    return np.stack([np.stack([hxy, off], -1), np.stack([off, -hxy], -1)], -2)


def curl_gradient_from_hessian(H: np.ndarray) -> np.ndarray:
    """Full gradient of ``curl(phi)``: rows are velocity components."""
    hxx, hxy, hyy = H[..., 0, 0], H[..., 0, 1], H[..., 1, 1]
    return np.stack([np.stack([hxy, hyy], -1), np.stack([-hxx, -hxy], -1)], -2)


# --- geometry helpers -------------------------------------------------------

def facet_reference_points(mesh: TriangularMesh, facets, side: int, t) -> np.ndarray:
    """Reference coordinates in the ``side`` cell of facet parameters ``t``.

    ``t`` runs from the lower to the higher global vertex of each facet, so
    both sides see the same physical points in the same order.
    """
    facets = np.asarray(facets)
    t = np.asarray(t, dtype=float).ravel()
    cells = mesh.facet_cells[facets, side]
    local = mesh.facet_local[facets, side]
    start = mesh.cells[cells, (local + 1) % 3]
    forward = start == mesh.facets[facets, 0]
    tables = _edge_ref_table(tuple(t))
    return tables[local, np.where(forward, 0, 1)]


@lru_cache(maxsize=64)
def _edge_ref_table(t: tuple) -> np.ndarray:
    t = np.array(t)
    return np.array([[edge_points(e, t), edge_points(e, 1.0 - t)] for e in range(3)])


@lru_cache(maxsize=64)
def _edge_basis_tables(p: int, t: tuple):
    el = reference_element(p)
    ref = _edge_ref_table(t)
    grads = np.array([[el.gradients(ref[e, o]) for o in range(2)] for e in range(3)])
    hess = np.array([[el.hessians(ref[e, o]) for o in range(2)] for e in range(3)])
    return grads, hess


@dataclass
class FacetSide:
    facets: np.ndarray
    cells: np.ndarray
    ref: np.ndarray       # (m, q, 2)
    xy: np.ndarray        # (m, q, 2)
    normal: np.ndarray    # (m, 2)
    dofs: np.ndarray      # (m, nd)
    curl: np.ndarray      # (m, q, nd, 2)
    strain: np.ndarray    # (m, q, nd, 2, 2)


def facet_sides(space: DofMap, facets, rule) -> list[FacetSide]:
    """Basis data on both sides (or the single side) of the given facets."""
    mesh = space.mesh
    facets = np.asarray(facets)
    t = tuple(rule.points.ravel())
    grads_tab, hess_tab = _edge_basis_tables(space.p, t)
    sides = []
    n_sides = 2 if len(facets) and np.all(mesh.facet_cells[facets, 1] >= 0) else 1
    if n_sides == 1 and np.any(mesh.facet_cells[facets, 1] >= 0):
        raise ValueError("facet set mixes interior and exterior facets")
    for s in range(n_sides):
        cells = mesh.facet_cells[facets, s]
        local = mesh.facet_local[facets, s]
        start = mesh.cells[cells, (local + 1) % 3]
        orient = np.where(start == mesh.facets[facets, 0], 0, 1)
        ref = _edge_ref_table(t)[local, orient]
        jinv, _ = inverse_jacobians(mesh.jacobians()[cells])
        g = np.einsum("mqdk,mkj->mqdj", grads_tab[local, orient], jinv)
        h = np.einsum("mki,mqdkl,mlj->mqdij", jinv, hess_tab[local, orient], jinv,
                      optimize=True)
        sides.append(FacetSide(
            facets=facets, cells=cells, ref=ref,
            xy=to_physical(mesh, cells, ref),
            normal=mesh.facet_normal[facets, s],
            dofs=space.cell_dofs[cells],
            curl=curl_of_scalar_basis(g),
            strain=strain_from_hessian(h),
        ))
    return sides


def volume_tables(space: DofMap, rule):
    """Physical curl and strain tables at volume points, plus JxW (nc, q)."""
    mesh = space.mesh
    el = reference_element(space.p)
    jinv, det = inverse_jacobians(mesh.jacobians())
    g = np.einsum("qdk,ckj->cqdj", el.gradients(rule.points), jinv)
    h = np.einsum("cki,qdkl,clj->cqdij", jinv, el.hessians(rule.points), jinv,
                  optimize=True)
    jxw = np.abs(det)[:, None] * rule.weights[None, :]
    return curl_of_scalar_basis(g), strain_from_hessian(h), jxw


# --- penalty ------------------------------------------------------------------

def inverse_constant(cell_area, facet_length, p, d: int = 2):
    """Trace inverse-inequality constant for degree-p polynomials on a simplex."""
    cell_area = np.asarray(cell_area, dtype=float)
    facet_length = np.asarray(facet_length, dtype=float)
    if np.any(cell_area <= 0) or np.any(facet_length <= 0):
        raise ValueError("degenerate geometry")
    return np.sqrt((p + 1) * (p + d) / d * facet_length / cell_area)


def side_zeta(delta, p, cell_area, facet_length, sup_2mu_facet, sup_inv_sqrt_2mu_cell):
    """Penalty scale of one facet side.

    ``sqrt(3 p (p - 1) / 2 |F| / |K|)`` is written as ``sqrt(3) C_inv(p - 2)``.
    """
    geo = np.sqrt(3.0) * inverse_constant(cell_area, facet_length, p - 2)
    return 1.0 / (delta * geo * np.asarray(sup_2mu_facet) * np.asarray(sup_inv_sqrt_2mu_cell))


def facet_beta(zeta_plus, zeta_minus=None):
    """``(z+ + z-)^-2`` on interior facets, ``(z+)^-2`` on boundary facets."""
    if zeta_minus is None:
        return np.asarray(zeta_plus, dtype=float) ** -2.0
    return (np.asarray(zeta_plus, dtype=float) + zeta_minus) ** -2.0


@dataclass(frozen=True, eq=False)
class PenaltyData:
    mesh: TriangularMesh
    p: int
    delta: float
    zeta: np.ndarray      # (nf, 2), column 1 is zero on exterior facets
    weights: np.ndarray   # (nf, 2)
    beta: np.ndarray      # (nf,)


def compute_penalty(mesh: TriangularMesh, viscosity: ViscosityField, p: int,
                    delta: float = 2.0) -> PenaltyData:
    """Robust averaging weights and penalty for every facet.

    Viscosity sups are sampled at the facet and cell quadrature points used
    by assembly (degree 2p).
    """
    if p < 2:
        raise ValueError("stream-function elements need p >= 2")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if delta <= COERCIVITY_THRESHOLD:
        warnings.warn(f"delta={delta} <= sqrt(2): coercivity is not guaranteed",
                      stacklevel=2)
    vrule = triangle_rule(2 * p)
    erule = interval_rule(2 * p)
    cells = np.arange(mesh.n_cells)
    ref = np.broadcast_to(vrule.points, (mesh.n_cells,) + vrule.points.shape)
    mu_cell = viscosity.sample(cells, ref, to_physical(mesh, cells, ref))
    inv_sqrt_2mu = 1.0 / np.sqrt(2.0 * mu_cell.min(axis=1))

    nf = mesh.n_facets
    zeta = np.zeros((nf, 2))
    for s in range(2):
        f = np.flatnonzero(mesh.facet_cells[:, s] >= 0)
        c = mesh.facet_cells[f, s]
        fref = facet_reference_points(mesh, f, s, erule.points)
        mu_f = viscosity.sample(c, fref, to_physical(mesh, c, fref))
        zeta[f, s] = side_zeta(delta, p, mesh.cell_area[c], mesh.facet_length[f],
                               (2.0 * mu_f).max(axis=1), inv_sqrt_2mu[c])
    interior = mesh.facet_cells[:, 1] >= 0
    total = zeta.sum(axis=1)
    weights = np.zeros((nf, 2))
    # the larger weight is computed, the other is 1 - w (exact for w >= 1/2),
    # so the pair sums to exactly one
    big = np.argmax(zeta, axis=1)
    rows = np.arange(nf)
    w_big = np.where(interior, zeta[rows, big] / total, 1.0)
    weights[rows, big] = w_big
    weights[rows, 1 - big] = 1.0 - w_big
    beta = np.where(interior, facet_beta(zeta[:, 0], zeta[:, 1]), facet_beta(zeta[:, 0]))
    return PenaltyData(mesh, p, float(delta), zeta, weights, beta)


# --- assembly -------------------------------------------------------------------

def _as_vector_function(fn):
    if fn is None or isinstance(fn, CellFunction):
        return fn

    def ev(cells, ref, xy):
        out = np.asarray(fn(xy[..., 0], xy[..., 1]), dtype=float)
        return np.moveaxis(np.broadcast_to(out, (2,) + xy.shape[:-1]), 0, -1)
    return CellFunction(ev)


def _facet_local_matrices(sides, penalty, viscosity, rule):
    """Local facet operators, their DOFs, and the per-side pieces reused by the RHS."""
    f = sides[0].facets
    jumps, avgs = [], []
    for s, side in enumerate(sides):
        mu = viscosity.sample(side.cells, side.ref, side.xy)
        w = penalty.weights[f, s]
        jumps.append(side.curl[..., :, None] * side.normal[:, None, None, None, :])
        avgs.append((w[:, None] * 2.0 * mu)[:, :, None, None, None] * side.strain)
    jump = np.concatenate(jumps, axis=2)
    avg = np.concatenate(avgs, axis=2)
    dofs = np.concatenate([side.dofs for side in sides], axis=1)
    W = rule.weights[None, :] * penalty.mesh.facet_length[f][:, None]
    X = weighted_gram(W, avg, jump)
    G = weighted_gram(W, jump, jump)
    K = -X - X.transpose(0, 2, 1) + penalty.beta[f][:, None, None] * G
    return K, dofs, jump, avg, W


def _scatter(rows, cols, vals, dofs, K):
    nd = dofs.shape[1]
    rows.append(np.repeat(dofs, nd, axis=1).ravel())
    cols.append(np.tile(dofs, (1, nd)).ravel())
    vals.append(K.ravel())


def assemble_system(space: DofMap, viscosity: ViscosityField, penalty: PenaltyData,
                    force=None, zero_penetration: Iterable[str] = (),
                    boundary_velocity=None, neumann=None):
    """Assemble the interior penalty operator and load vector over all DOFs.

    Parameters
    ----------
    force : callable ``f(x, y) -> (fx, fy)`` or CellFunction returning (..., 2)
    zero_penetration : boundary tags whose facets carry the boundary terms of
        the skeleton (tangential velocity imposed weakly). Tags not listed are
        free slip when ``phi`` is constrained there.
    boundary_velocity : callable ``u_D(x, y) -> (ux, uy)`` on zero-penetration
        facets; ``None`` means zero.
    neumann : mapping tag -> ``g(x, y) -> (gx, gy)`` traction data.

    Returns the CSR matrix and the load vector.
    """
    mesh = space.mesh
    if penalty.mesh is not mesh or penalty.p != space.p:
        raise ValueError("penalty data were computed for a different mesh or degree")
    p = space.p
    n = space.total_dofs
    vrule = triangle_rule(2 * p)
    erule = interval_rule(2 * p)
    rows, cols, vals = [], [], []
    b = np.zeros(n)

    curl, strain, jxw = volume_tables(space, vrule)
    cells = np.arange(mesh.n_cells)
    ref = np.broadcast_to(vrule.points, (mesh.n_cells,) + vrule.points.shape)
    xy = to_physical(mesh, cells, ref)
    mu = viscosity.sample(cells, ref, xy)
    K = weighted_gram(2.0 * mu * jxw, strain, strain)
    _scatter(rows, cols, vals, space.cell_dofs, K)

    if force is not None:
        b += body_load(space, force, (curl, strain, jxw))

    interior = mesh.interior_facets
    if len(interior):
        K, dofs, *_ = _facet_local_matrices(facet_sides(space, interior, erule),
                                            penalty, viscosity, erule)
        _scatter(rows, cols, vals, dofs, K)

    zp = mesh.facets_with_tag(*zero_penetration) if zero_penetration else np.empty(0, int)
    if len(zp):
        sides = facet_sides(space, zp, erule)
        K, dofs, jump, avg, W = _facet_local_matrices(sides, penalty, viscosity, erule)
        _scatter(rows, cols, vals, dofs, K)
        ud = _as_vector_function(boundary_velocity)
        if ud is not None:
            side = sides[0]
            uq = ud(side.cells, side.ref, side.xy)
            tensor = uq[..., :, None] * side.normal[:, None, None, :]
            test = penalty.beta[zp][:, None, None, None, None] * jump - avg
            np.add.at(b, dofs, np.einsum("mq,mqab,mqiab->mi", W, tensor, test, optimize=True))

    for tag, g in (neumann or {}).items():
        facets = mesh.facets_with_tag(tag)
        if not len(facets):
            continue
        side = facet_sides(space, facets, erule)[0]
        gq = _as_vector_function(g)(side.cells, side.ref, side.xy)
        W = erule.weights[None, :] * mesh.facet_length[facets][:, None]
        np.add.at(b, side.dofs, np.einsum("mq,mqk,mqdk->md", W, gq, side.curl, optimize=True))

    A = assemble_csr(np.concatenate(rows), np.concatenate(cols),
                     np.concatenate(vals), (n, n))
    return A, b


def body_load(space: DofMap, force, tables=None) -> np.ndarray:
    """Load vector ``(f, curl psi)`` of a body force alone (no matrix work)."""
    mesh = space.mesh
    rule = triangle_rule(2 * space.p)
    curl, _, jxw = tables if tables is not None else volume_tables(space, rule)
    cells = np.arange(mesh.n_cells)
    ref = np.broadcast_to(rule.points, (mesh.n_cells,) + rule.points.shape)
    fq = _as_vector_function(force)(cells, ref, to_physical(mesh, cells, ref))
    b = np.zeros(space.total_dofs)
    np.add.at(b, space.cell_dofs, np.einsum("cq,cqk,cqdk->cd", jxw, fq, curl, optimize=True))
    return b


class StokesSolver:
    """Reduce, factor and solve; the factor can be reused for new loads."""

    def __init__(self, space: DofMap, A: sp.spmatrix):
        self.space = space
        self.A = sp.csr_matrix(A)
        free = space.free_dofs
        self.free = free
        self.factor = CholeskyFactor(self.A[free][:, free])

    def solve(self, b) -> ScalarField:
        space = self.space
        rhs = np.asarray(b, dtype=float)[self.free]
        if len(space.constrained_dofs):
            rhs = rhs - self.A[self.free][:, space.constrained_dofs] @ space.constraint_values
        x = self.factor.solve(rhs)
        return ScalarField(space, expand(space, self.free, x))


def solve_stokes(space: DofMap, viscosity: ViscosityField, delta: float = 2.0,
                 **data) -> tuple[ScalarField, PenaltyData]:
    """Compute penalty, assemble and solve in one call."""
    penalty = compute_penalty(space.mesh, viscosity, space.p, delta)
    A, b = assemble_system(space, viscosity, penalty, **data)
    A_ff, rhs, free = reduce_system(A, b, space)
    x = CholeskyFactor(A_ff).solve(rhs)
    return ScalarField(space, expand(space, free, x)), penalty


def velocity_at(phi: ScalarField, cells, ref) -> np.ndarray:
    """``curl(phi)`` at reference points of cells, (m, q, 2)."""
    return curl_of_scalar_basis(phi.grad_at(cells, ref))


def strain_at(phi: ScalarField, cells, ref) -> np.ndarray:
    """``eps(curl(phi))`` at reference points of cells, (m, q, 2, 2)."""
    return strain_from_hessian(phi.hess_at(cells, ref))
