"""Lagrange elements on the reference triangle and quadrature rules.

The reference triangle has vertices (0, 0), (1, 0), (0, 1). Local edge ``e``
runs from vertex ``(e + 1) % 3`` to vertex ``(e + 2) % 3``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray    # (nq, dim) reference coordinates
    weights: np.ndarray   # (nq,)
    degree: int


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi rule on the reference triangle, exact to ``degree``."""
    n = max(1, (degree + 2) // 2)
    t, wt = roots_jacobi(n, 1.0, 0.0)    # weight (1 - t)
    s, ws = roots_legendre(n)
    xi = 0.5 * (1.0 + t)
    eta = 0.5 * (1.0 + s)
    XI, ETA = np.meshgrid(xi, eta, indexing="ij")
    pts = np.column_stack([XI.ravel(), (ETA * (1.0 - XI)).ravel()])
    w = 0.125 * np.outer(wt, ws).ravel()
    return QuadratureRule(pts, w, degree)


@lru_cache(maxsize=None)
def interval_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact to ``degree``."""
    n = max(1, (degree + 2) // 2)
    s, ws = roots_legendre(n)
    return QuadratureRule(0.5 * (1.0 + s)[:, None], 0.5 * ws, degree)


def edge_points(edge: int, t: np.ndarray) -> np.ndarray:
    """Reference coordinates of parameters ``t`` in [0, 1] along local edge."""
    a = REFERENCE_VERTICES[(edge + 1) % 3]
    b = REFERENCE_VERTICES[(edge + 2) % 3]
    t = np.asarray(t, dtype=float).reshape(-1, 1)
    return (1.0 - t) * a + t * b


def lattice_nodes(p: int) -> np.ndarray:
    """Equispaced nodes ordered vertices, edges (along local edge direction), interior."""
    verts = [REFERENCE_VERTICES[k] for k in range(3)]
    edges = []
    for e in range(3):
        t = np.arange(1, p) / p
        edges.extend(edge_points(e, t))
    interior = [
        np.array([i / p, j / p])
        for j in range(1, p) for i in range(1, p - j)
    ]
    return np.array(verts + edges + interior).reshape(-1, 2)


def _monomials(p: int) -> list[tuple[int, int]]:
    return [(a, d - a) for d in range(p + 1) for a in range(d, -1, -1)]


def _eval_monomials(exps, pts: np.ndarray, dx: int, dy: int) -> np.ndarray:
    x = pts[:, 0:1]
    y = pts[:, 1:2]
    out = np.zeros((len(pts), len(exps)))
    for m, (a, b) in enumerate(exps):
        if a < dx or b < dy:
            continue
        ca = np.prod(np.arange(a - dx + 1, a + 1)) if dx else 1.0
        cb = np.prod(np.arange(b - dy + 1, b + 1)) if dy else 1.0
        out[:, m] = (ca * cb * x ** (a - dx) * y ** (b - dy)).ravel()
    return out


class ReferenceElement:
    """Degree-p Lagrange basis on the reference triangle."""

    def __init__(self, p: int):
        if p < 1:
            raise ValueError("degree must be at least 1")
        self.p = p
        self.nodes = lattice_nodes(p)
        self.dof_count = (p + 1) * (p + 2) // 2
        self._exps = _monomials(p)
        vdm = _eval_monomials(self._exps, self.nodes, 0, 0)
        self._coeffs = np.linalg.inv(vdm)

    def _eval(self, pts, dx, dy):
        return _eval_monomials(self._exps, np.atleast_2d(pts), dx, dy) @ self._coeffs

    def values(self, pts) -> np.ndarray:
        """(npts, ndofs)"""
        return self._eval(pts, 0, 0)

    def gradients(self, pts) -> np.ndarray:
        """(npts, ndofs, 2)"""
        return np.stack([self._eval(pts, 1, 0), self._eval(pts, 0, 1)], axis=-1)

    def hessians(self, pts) -> np.ndarray:
        """(npts, ndofs, 2, 2)"""
        hxx = self._eval(pts, 2, 0)
        hxy = self._eval(pts, 1, 1)
        hyy = self._eval(pts, 0, 2)
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def edge_dofs(self, edge: int) -> np.ndarray:
        """Local DOFs on a closed local edge: start vertex, interior nodes, end vertex."""
        n = self.p - 1
        inner = 3 + edge * n + np.arange(n)
        return np.concatenate([[(edge + 1) % 3], inner, [(edge + 2) % 3]])


@lru_cache(maxsize=None)
def reference_element(p: int) -> ReferenceElement:
    return ReferenceElement(p)


def tabulate(p: int, rule: QuadratureRule, derivative_order: int = 2):
    """Basis tables at the rule's points.

    Returns ``(values,)``, ``(values, gradients)`` or
    ``(values, gradients, hessians)`` depending on ``derivative_order``.
    """
    if p < 2:
        raise ValueError("stream-function elements need p >= 2")
    if derivative_order not in (0, 1, 2):
        raise ValueError("derivative_order must be 0, 1 or 2")
    el = reference_element(p)
    out = [el.values(rule.points)]
    if derivative_order >= 1:
        out.append(el.gradients(rule.points))
    if derivative_order >= 2:
        out.append(el.hessians(rule.points))
    return tuple(out)


def inverse_jacobians(jac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse and determinant of a stack of 2x2 Jacobians."""
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(np.abs(det) <= 1e-300):
        raise ValueError("singular Jacobian (degenerate cell)")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    return inv, det


def push_forward(jac: np.ndarray, gradients=None, hessians=None):
    """Map reference derivative tables to physical cells.

    ``jac`` is (nc, 2, 2); reference tables are (nq, nd, 2[, 2]). Returns
    physical tables with a leading cell axis. Affine cells only, so the
    Hessian is ``J^-T H J^-1`` with no curvature term.
    """
    jinv, _ = inverse_jacobians(np.asarray(jac, dtype=float))
    out = []
    if gradients is not None:
        out.append(np.einsum("qdk,ckj->cqdj", gradients, jinv))
    if hessians is not None:
        out.append(np.einsum("cki,qdkl,clj->cqdij", jinv, hessians, jinv, optimize=True))
    return out[0] if len(out) == 1 else tuple(out)


def curl_of_scalar_basis(gradients: np.ndarray) -> np.ndarray:
    """Curl of scalar functions from their gradients: (d/dy, -d/dx)."""
    return np.stack([gradients[..., 1], -gradients[..., 0]], axis=-1)
