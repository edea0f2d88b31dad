"""Error norms, benchmark functionals and convergence rates."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .element import interval_rule, triangle_rule
from .ripg import (PenaltyData, ViscosityField, curl_gradient_from_hessian,
                   facet_reference_points,
                   facet_sides, strain_at, velocity_at)
from .space import ScalarField, to_physical


def _volume_points(mesh, degree):
    rule = triangle_rule(degree)
    cells = np.arange(mesh.n_cells)
    ref = np.broadcast_to(rule.points, (mesh.n_cells,) + rule.points.shape)
    jxw = mesh.cell_area[:, None] * 2.0 * rule.weights[None, :]
    return cells, ref, to_physical(mesh, cells, ref), jxw


def error_norms(phi_h: ScalarField, phi: Callable, u: Callable, grad_u: Callable,
                viscosity: ViscosityField, penalty: PenaltyData,
                zero_penetration: Iterable[str] = (), degree: int | None = None):
    """Errors (L2 of phi, L2 of u, H1 seminorm of u, DG norm) against exact fields.

    The DG norm uses the same penalty data and skeleton (interior facets plus
    zero-penetration facets) as assembly. Exact callables take ``(x, y)``;
    ``u`` returns shape (2, ...) and ``grad_u`` (2, 2, ...).
    """
    mesh = phi_h.dofmap.mesh
    p = phi_h.p
    degree = degree or 2 * p + 4
    cells, ref, xy, jxw = _volume_points(mesh, degree)
    x, y = xy[..., 0], xy[..., 1]

    e_phi = phi(x, y) - phi_h.at(cells, ref)
    l2_phi = math.sqrt(np.sum(jxw * e_phi ** 2))

    u_ex = np.moveaxis(np.asarray(u(x, y)), 0, -1)
    e_u = u_ex - velocity_at(phi_h, cells, ref)
    l2_u = math.sqrt(np.sum(jxw[..., None] * e_u ** 2))

    g_ex = np.moveaxis(np.asarray(grad_u(x, y)), (0, 1), (-2, -1))
    e_g = g_ex - curl_gradient_from_hessian(phi_h.hess_at(cells, ref))
    h1_u = math.sqrt(np.sum(jxw[..., None, None] * e_g ** 2))

    e_eps = 0.5 * (e_g + np.swapaxes(e_g, -1, -2))
    mu = viscosity.sample(cells, ref, xy)
    dg2 = np.sum(2.0 * mu * jxw * np.sum(e_eps ** 2, axis=(-1, -2)))

    erule = interval_rule(degree)
    groups = [mesh.interior_facets]
    if zero_penetration:
        groups.append(mesh.facets_with_tag(*zero_penetration))
    for facets in groups:
        if not len(facets):
            continue
        sides = facet_sides(phi_h.dofmap, facets, erule)
        jump = 0.0
        for side in sides:
            e = velocity_at(phi_h, side.cells, side.ref)
            if len(sides) == 1:
                xs, ys = side.xy[..., 0], side.xy[..., 1]
                e = np.moveaxis(np.asarray(u(xs, ys)), 0, -1) - e
            else:
                e = -e   # exact velocity has no jump
            jump = jump + e[..., :, None] * side.normal[:, None, None, :]
        W = erule.weights[None, :] * mesh.facet_length[facets][:, None]
        dg2 += np.sum(penalty.beta[facets][:, None] * W * np.sum(jump ** 2, axis=(-1, -2)))
    return l2_phi, l2_u, h1_u, math.sqrt(dg2)


@dataclass
class FunctionalReport:
    Nu: float
    u_rms: float
    W: float
    Phi: float
    Delta: float
    dof_count: int
    h: float
    p: int
    W_negative: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def nusselt(T: ScalarField, t_bottom: float = 0.0, t_top: float = 1.0) -> float:
    """Heat flux through the top wall normalised by the conductive flux.

    With ``t_bottom = 0, t_top = 1`` this is the plain integral of the
    outward normal derivative over y = 1.
    """
    mesh = T.dofmap.mesh
    facets = mesh.facets_with_tag("top")
    rule = interval_rule(2 * T.p + 2)
    cells = mesh.facet_cells[facets, 0]
    ref = facet_reference_points(mesh, facets, 0, rule.points)
    grad = T.grad_at(cells, ref)
    flux = np.einsum("mqk,mk->mq", grad, mesh.facet_normal[facets, 0])
    W = rule.weights[None, :] * mesh.facet_length[facets][:, None]
    return float(np.sum(W * flux)) / (t_top - t_bottom)


def functionals(phi_h: ScalarField, T: ScalarField, viscosity: ViscosityField,
                Ra: float, t_bottom: float = 0.0, t_top: float = 1.0,
                degree: int | None = None) -> FunctionalReport:
    """Nu, u_rms, buoyancy work W, dissipation Phi and the energy mismatch Delta.

    ``W = int T u_y`` and ``Phi = int 2 mu eps:eps``; for a converged state
    ``Phi / Ra`` balances ``W`` up to the facet terms of the discretisation.
    The raw ``W`` is reported even when negative; ``W_negative`` flags it.
    """
    mesh = phi_h.dofmap.mesh
    degree = degree or 2 * max(phi_h.p, T.p) + 2
    cells, ref, xy, jxw = _volume_points(mesh, degree)
    u = velocity_at(phi_h, cells, ref)
    u_rms = math.sqrt(np.sum(jxw * np.sum(u ** 2, axis=-1)) / mesh.cell_area.sum())
    W = float(np.sum(jxw * T.at(cells, ref) * u[..., 1]))
    eps = strain_at(phi_h, cells, ref)
    mu = viscosity.sample(cells, ref, xy)
    Phi = float(np.sum(jxw * 2.0 * mu * np.sum(eps ** 2, axis=(-1, -2))))
    if Ra == 0:
        delta = math.nan
    else:
        # a negative work integral is floored at zero (and flagged) so that
        # Delta stays in [0, 1]
        w_pos = max(W, 0.0)
        denom = max(w_pos, Phi / Ra)
        delta = abs(w_pos - Phi / Ra) / denom if denom > 0 else math.nan
    return FunctionalReport(
        Nu=nusselt(T, t_bottom, t_top), u_rms=u_rms, W=W, Phi=Phi, Delta=delta,
        dof_count=phi_h.dofmap.total_dofs, h=mesh.h, p=phi_h.p, W_negative=W < 0,
    )


def relative_error(value: float, reference: float) -> float:
    return abs(value - reference) / reference


@dataclass
class RateEstimate:
    slope: float
    pairwise: np.ndarray
    monotone: bool


def convergence_rates(errors: Sequence[float], h: Sequence[float],
                      levels: int = 3) -> RateEstimate:
    """Least-squares slope of log(error) against log(h) over the finest levels."""
    errors = np.asarray(errors, dtype=float)
    h = np.asarray(h, dtype=float)
    if len(errors) < 3 or len(errors) != len(h):
        raise ValueError("need at least three matching levels")
    order = np.argsort(-h)
    errors, h = errors[order], h[order]
    le, lh = np.log(errors), np.log(h)
    pairwise = np.diff(le) / np.diff(lh)
    k = min(levels, len(errors))
    slope = np.polyfit(lh[-k:], le[-k:], 1)[0]
    return RateEstimate(float(slope), pairwise, bool(np.all(np.diff(errors) < 0)))


def divergence_defect(phi_h: ScalarField, degree: int | None = None) -> tuple[float, float]:
    """(max |div u_h|, max |u_h|) over volume quadrature points."""
    mesh = phi_h.dofmap.mesh
    cells, ref, _, _ = _volume_points(mesh, degree or 2 * phi_h.p)
    grad_u = curl_gradient_from_hessian(phi_h.hess_at(cells, ref))
    div = grad_u[..., 0, 0] + grad_u[..., 1, 1]
    u = velocity_at(phi_h, cells, ref)
    return float(np.abs(div).max()), float(np.abs(u).max())


def boundary_flux_defect(phi_h: ScalarField, tags=("bottom", "top", "left", "right"),
                         degree: int | None = None) -> tuple[float, float]:
    """(max |u_h . n|, max |u_h|) over quadrature points of the given walls."""
    mesh = phi_h.dofmap.mesh
    facets = mesh.facets_with_tag(*tags)
    rule = interval_rule(degree or 2 * phi_h.p)
    cells = mesh.facet_cells[facets, 0]
    ref = facet_reference_points(mesh, facets, 0, rule.points)
    u = velocity_at(phi_h, cells, ref)
    un = np.einsum("mqk,mk->mq", u, mesh.facet_normal[facets, 0])
    return float(np.abs(un).max()), float(np.abs(u).max())
