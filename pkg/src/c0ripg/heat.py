"""Thermal convection: temperature transport, viscosity laws, Picard coupling."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .analysis import FunctionalReport, functionals, nusselt
from .element import inverse_jacobians, reference_element, triangle_rule
from .linalg import assemble_csr, lu_solve, weighted_gram
from .mesh import TriangularMesh
from .ripg import (StokesSolver, ViscosityField, assemble_system, body_load,
                   compute_penalty, strain_at, velocity_at)
from .space import (CellFunction, DofMap, ScalarField, build_space, expand,
                    interpolate, reduce_system, to_physical)

log = logging.getLogger(__name__)

STRAIN_FLOOR = 1e-12
PLASTIC_FLOOR = 1e-3


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    Ra: float
    delta_mu_T: float
    delta_mu_z: float
    sigma_Y: float
    Nu_ref: float
    u_rms_ref: float

    def __post_init__(self):
        # Ra = 0 is allowed: it is the pure-conduction limit
        if min(self.delta_mu_T, self.delta_mu_z) <= 0 or self.Ra < 0 or self.sigma_Y < 0:
            raise ValueError(f"invalid benchmark parameters for {self.name}")

    @property
    def isoviscous(self) -> bool:
        return self.delta_mu_T == 1 and self.delta_mu_z == 1 and self.sigma_Y == 0


CASES = {
    c.name: c for c in [
        BenchmarkCase("BB1a", 1e4, 1.0, 1.0, 0.0, 4.884409, 42.864947),
        BenchmarkCase("BB2a", 1e4, 1e3, 1.0, 0.0, 10.065899, 480.433425),
        BenchmarkCase("T2", 1e2, 1e5, 1.0, 1.0, 8.559459, 140.775535),
        BenchmarkCase("T4", 1e2, 1e5, 10.0, 1.0, 6.615419, 79.088809),
    ]
}


@dataclass(frozen=True)
class ViscosityModel:
    """Temperature-, depth- and strain-rate-dependent viscosity.

    ``mu_lin = exp(-ln(dmu_T) T + ln(dmu_z) z)`` with depth ``z = 1 - y``;
    for ``sigma_Y > 0`` it is combined with
    ``mu_plast = 1e-3 + sigma_Y / sqrt(eps:eps)`` as ``2 / (1/mu_lin + 1/mu_plast)``.
    """

    delta_mu_T: float
    delta_mu_z: float
    sigma_Y: float

    @classmethod
    def for_case(cls, case: BenchmarkCase) -> "ViscosityModel":
        return cls(case.delta_mu_T, case.delta_mu_z, case.sigma_Y)

    def linear(self, T, y):
        return np.exp(-math.log(self.delta_mu_T) * T + math.log(self.delta_mu_z) * (1.0 - y))

    def plastic(self, eps_norm):
        return PLASTIC_FLOOR + self.sigma_Y / np.maximum(eps_norm, STRAIN_FLOOR)

    def __call__(self, T, y, eps_norm=None):
        mu_lin = self.linear(T, y)
        if self.sigma_Y == 0:
            return mu_lin
        if eps_norm is None:
            eps_norm = np.zeros_like(mu_lin)
        return 2.0 / (1.0 / mu_lin + 1.0 / self.plastic(eps_norm))


def evaluate_viscosity(model: ViscosityModel, T: ScalarField,
                       phi: ScalarField | None = None) -> ViscosityField:
    """Viscosity field from the temperature and (if plastic) the stream function."""
    def ev(cells, ref, xy):
        t = T.at(cells, ref)
        eps_norm = None
        if model.sigma_Y > 0:
            if phi is None:
                eps_norm = np.zeros_like(t)
            else:
                eps = strain_at(phi, cells, ref)
                eps_norm = np.sqrt(np.sum(eps ** 2, axis=(-1, -2)))
        mu = model(t, xy[..., 1], eps_norm)
        if not np.all(np.isfinite(mu)):
            raise FloatingPointError("non-finite viscosity (diverging iterate?)")
        return mu
    return ViscosityField(ev)


def velocity_function(phi: ScalarField) -> CellFunction:
    return CellFunction(lambda cells, ref, xy: velocity_at(phi, cells, ref))


def buoyancy(T: ScalarField, Ra: float) -> CellFunction:
    """Body force ``Ra T y_hat``."""
    def ev(cells, ref, xy):
        t = T.at(cells, ref)
        return np.stack([np.zeros_like(t), Ra * t], axis=-1)
    return CellFunction(ev)


def assemble_heat(space: DofMap, velocity=None):
    """Galerkin matrix of ``u . grad T - lap T`` and a zero load vector.

    ``velocity`` is a CellFunction returning (m, q, 2) or ``None``. Boundary
    values are lifted later by :func:`c0ripg.space.reduce_system`; sides
    without Dirichlet data get the natural zero-flux condition.
    """
    mesh = space.mesh
    el = reference_element(space.p)
    rule = triangle_rule(2 * space.p)
    jinv, det = inverse_jacobians(mesh.jacobians())
    jxw = np.abs(det)[:, None] * rule.weights[None, :]
    vals = el.values(rule.points)
    grads = np.einsum("qdk,ckj->cqdj", el.gradients(rule.points), jinv)
    K = weighted_gram(jxw, grads, grads)
    if velocity is not None:
        cells = np.arange(mesh.n_cells)
        ref = np.broadcast_to(rule.points, (mesh.n_cells,) + rule.points.shape)
        u = velocity(cells, ref, to_physical(mesh, cells, ref))
        adv = np.einsum("cqk,cqjk->cqj", u, grads)
        K += weighted_gram(jxw, np.broadcast_to(vals, adv.shape[:2] + vals.shape[1:]), adv)
    nd = el.dof_count
    dofs = space.cell_dofs
    A = assemble_csr(np.repeat(dofs, nd, axis=1), np.tile(dofs, (1, nd)), K,
                     (space.total_dofs, space.total_dofs))
    return A, np.zeros(space.total_dofs)


def solve_heat(space: DofMap, velocity=None) -> ScalarField:
    A, b = assemble_heat(space, velocity)
    A_ff, rhs, free = reduce_system(A, b, space)
    return ScalarField(space, expand(space, free, lu_solve(A_ff, rhs)))


@dataclass
class PicardOptions:
    relax: float | None = None       # None: 1.0 for linear viscosity, 0.5 otherwise
    max_iter: int = 500
    tol_T: float = 1e-8
    tol_Nu: float = 1e-8
    delta: float = 2.0
    t_bottom: float = 1.0
    t_top: float = 0.0
    perturbation: float = 0.1


@dataclass
class SteadyState:
    phi: ScalarField
    T: ScalarField
    viscosity: ViscosityField
    report: FunctionalReport
    converged: bool
    trace: list = field(default_factory=list)

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "Nu", "u_rms", "dT_inf", "mu_min", "mu_max"])
            for row in self.trace:
                w.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])


class PicardDivergence(RuntimeError):
    pass


def _viscosity_range(mu: ViscosityField, mesh: TriangularMesh, p: int):
    rule = triangle_rule(2 * p)
    cells = np.arange(mesh.n_cells)
    ref = np.broadcast_to(rule.points, (mesh.n_cells,) + rule.points.shape)
    vals = mu.sample(cells, ref, to_physical(mesh, cells, ref))
    return float(vals.min()), float(vals.max())


def solve_steady(case: BenchmarkCase, mesh: TriangularMesh, p: int,
                 options: PicardOptions | None = None,
                 initial_T: ScalarField | None = None) -> SteadyState:
    """Steady convection by alternating Stokes and temperature solves.

    Each iteration solves Stokes with the current temperature and viscosity,
    then the temperature equation with the new velocity, and under-relaxes
    the temperature. Stops when both the temperature update (max norm) and
    the relative Nusselt change fall below tolerance.
    """
    opts = options or PicardOptions()
    model = ViscosityModel.for_case(case)
    relax = opts.relax
    if relax is None:
        relax = 1.0 if case.sigma_Y == 0 and case.delta_mu_T == 1 else 0.5
    if not 0 < relax <= 1:
        raise ValueError("relaxation must lie in (0, 1]")

    walls = ("bottom", "top", "left", "right")
    V = build_space(mesh, p, {t: 0.0 for t in walls})
    S = build_space(mesh, p, {"bottom": opts.t_bottom, "top": opts.t_top})
    if initial_T is None:
        tb, tt, eps = opts.t_bottom, opts.t_top, opts.perturbation
        T = interpolate(lambda x, y: tb + (tt - tb) * y
                        + eps * np.cos(np.pi * x) * np.sin(np.pi * y), S)
    else:
        T = ScalarField(S, initial_T.coefficients.copy())

    phi = ScalarField(V)
    constant_mu = case.delta_mu_T == 1 and case.delta_mu_z == 1 and case.sigma_Y == 0
    solver = None
    trace = []
    nu_old = math.nan
    converged = False
    for it in range(1, opts.max_iter + 1):
        mu = evaluate_viscosity(model, T, phi if case.sigma_Y > 0 else None)
        if solver is None or not constant_mu:
            penalty = compute_penalty(mesh, mu, p, opts.delta)
            A, b = assemble_system(V, mu, penalty, force=buoyancy(T, case.Ra))
            solver = StokesSolver(V, A)
        else:
            b = body_load(V, buoyancy(T, case.Ra))
        phi = solver.solve(b)

        T_new = solve_heat(S, velocity_function(phi))
        dT = float(np.max(np.abs(T_new.coefficients - T.coefficients)))
        T = ScalarField(S, relax * T_new.coefficients + (1 - relax) * T.coefficients)
        if not np.all(np.isfinite(T.coefficients)):
            raise PicardDivergence(f"non-finite temperature at iteration {it}")

        nu = nusselt(T, opts.t_bottom, opts.t_top)
        urms = _u_rms(phi)
        mu_min, mu_max = _viscosity_range(mu, mesh, p)
        trace.append((it, nu, urms, dT, mu_min, mu_max))
        log.info("picard %d: Nu=%.8g u_rms=%.8g dT=%.3e", it, nu, urms, dT)
        dnu = abs(nu - nu_old) / abs(nu) if nu != 0 else abs(nu - nu_old)
        nu_old = nu
        if dT <= opts.tol_T and dnu <= opts.tol_Nu:
            converged = True
            break

    # final fields are mutually consistent: Stokes solved with the final T
    mu = evaluate_viscosity(model, T, phi if case.sigma_Y > 0 else None)
    penalty = compute_penalty(mesh, mu, p, opts.delta)
    A, b = assemble_system(V, mu, penalty, force=buoyancy(T, case.Ra))
    phi = StokesSolver(V, A).solve(b)
    if case.sigma_Y > 0:
        mu = evaluate_viscosity(model, T, phi)
    report = functionals(phi, T, mu, case.Ra, opts.t_bottom, opts.t_top)
    return SteadyState(phi, T, mu, report, converged, trace)


def _u_rms(phi: ScalarField) -> float:
    mesh = phi.dofmap.mesh
    rule = triangle_rule(2 * phi.p)
    cells = np.arange(mesh.n_cells)
    ref = np.broadcast_to(rule.points, (mesh.n_cells,) + rule.points.shape)
    u = velocity_at(phi, cells, ref)
    jxw = 2.0 * mesh.cell_area[:, None] * rule.weights[None, :]
    return math.sqrt(np.sum(jxw * np.sum(u ** 2, axis=-1)) / mesh.cell_area.sum())
