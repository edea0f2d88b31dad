"""Batch drivers for the convergence, stability, benchmark and tracer runs.

Run as ``python -m c0ripg <experiment> [flags]``. Settings come from an
optional TOML file (``--config``) and each key can be overridden by the flag
of the same name. Outputs go to ``<out>/<experiment>/<case>/<N>_<p>.csv``
plus a combined ``summary.csv``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import manufactured
from .analysis import (boundary_flux_defect, convergence_rates, divergence_defect,
                       relative_error)
from .heat import CASES, PicardDivergence, PicardOptions, solve_steady
from .linalg import CholeskyFactor, NotSPDError
from .mesh import build_structured
from .ripg import ViscosityField, assemble_system, compute_penalty
from .space import ScalarField, build_space, expand, reduce_system
from .tracers import advect_rk3, equidistant_particles, occupancy_stats, write_snapshot

log = logging.getLogger(__name__)

EXPERIMENTS = ("mms", "delta_sweep", "benchmark", "tracers")
UNIT_SQUARE = ((0.0, 1.0), (0.0, 1.0))

MMS_COLUMNS = ["N", "p", "delta", "dofs", "h", "L2_phi", "L2_u", "H1_u", "DG",
               "div_max", "flux_max", "u_max"]
SWEEP_COLUMNS = ["N", "p", "delta", "spd", "L2_phi", "L2_u", "H1_u", "DG"]
BENCH_COLUMNS = ["case", "N", "p", "delta", "dofs", "Nu", "u_rms", "W", "Phi", "Delta",
                 "eps_Nu", "eps_urms", "converged", "iterations"]


@dataclass
class RunConfig:
    experiment: str = "mms"
    N: list = field(default_factory=lambda: [8, 16, 32, 64])
    p: list = field(default_factory=lambda: [2, 3])
    delta: list = field(default_factory=lambda: [2.0])
    case: str = "BB1a"
    max_picard: int = 500
    relax: float | None = None
    tol: float = 1e-8
    out: str = "out"
    particles: int = 256
    steps: int = 100
    dt: float = 1e-4
    snapshot_every: int = 0

    def __post_init__(self):
        self.experiment = self.experiment.replace("-", "_")
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; known: {', '.join(CASES)}")
        self.N = [int(n) for n in np.atleast_1d(self.N)]
        self.p = [int(k) for k in np.atleast_1d(self.p)]
        self.delta = [float(d) for d in np.atleast_1d(self.delta)]
        if min(self.N) < 1 or min(self.p) < 2:
            raise ValueError("need N >= 1 and p >= 2")

    def picard(self, delta: float) -> PicardOptions:
        return PicardOptions(relax=self.relax, max_iter=self.max_picard,
                             tol_T=self.tol, tol_Nu=self.tol, delta=delta)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_rows(path: Path, columns, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def _outdir(cfg: RunConfig, case: str) -> Path:
    return Path(cfg.out) / cfg.experiment / case


def run_mms(cfg: RunConfig) -> list[dict]:
    """Manufactured-solution errors for every (p, N) plus a rate table."""
    rows = []
    delta = cfg.delta[0]
    for p in cfg.p:
        for N in cfg.N:
            phi, mu, penalty = manufactured.solve(N, p, delta)
            e = manufactured.errors(phi, mu, penalty)
            div, umax = divergence_defect(phi)
            flux, _ = boundary_flux_defect(phi)
            row = dict(N=N, p=p, delta=delta, dofs=phi.dofmap.total_dofs, h=phi.dofmap.mesh.h,
                       L2_phi=e[0], L2_u=e[1], H1_u=e[2], DG=e[3],
                       div_max=div, flux_max=flux, u_max=umax)
            log.info("mms p=%d N=%d DG=%.4e", p, N, e[3])
            write_rows(_outdir(cfg, "mms") / f"{N}_{p}.csv", MMS_COLUMNS, [row])
            rows.append(row)
    write_rows(_outdir(cfg, "mms") / "summary.csv", MMS_COLUMNS, rows)

    rates = []
    for p in cfg.p:
        sub = [r for r in rows if r["p"] == p]
        if len(sub) < 3:
            continue
        for norm in ("L2_phi", "L2_u", "H1_u", "DG"):
            est = convergence_rates([r[norm] for r in sub], [r["h"] for r in sub])
            rates.append(dict(p=p, norm=norm, slope=est.slope, monotone=est.monotone))
    if rates:
        write_rows(_outdir(cfg, "mms") / "rates.csv", ["p", "norm", "slope", "monotone"], rates)
    return rows


def sweep_point(N: int, p: int, delta: float) -> dict:
    """SPD probe and, when it passes, the error norms for one penalty parameter."""
    mesh = build_structured(manufactured.DOMAIN, N)
    space = build_space(mesh, p, {t: 0.0 for t in manufactured.WALLS})
    mu = ViscosityField.from_function(manufactured.viscosity)
    penalty = compute_penalty(mesh, mu, p, delta)
    A, b = assemble_system(space, mu, penalty, force=manufactured.force,
                           zero_penetration=manufactured.WALLS,
                           boundary_velocity=manufactured.velocity)
    A_ff, rhs, free = reduce_system(A, b, space)
    row = dict(N=N, p=p, delta=delta, spd=True)
    try:
        x = CholeskyFactor(A_ff).solve(rhs)
    except NotSPDError:
        row["spd"] = False
        row.update(L2_phi=math.nan, L2_u=math.nan, H1_u=math.nan, DG=math.nan)
        return row
    phi = ScalarField(space, expand(space, free, x))
    e = manufactured.errors(phi, mu, penalty)
    row.update(L2_phi=e[0], L2_u=e[1], H1_u=e[2], DG=e[3])
    return row


def run_delta_sweep(cfg: RunConfig) -> list[dict]:
    rows = []
    for p in cfg.p:
        for N in cfg.N:
            sub = [sweep_point(N, p, d) for d in cfg.delta]
            write_rows(_outdir(cfg, "mms") / f"{N}_{p}.csv", SWEEP_COLUMNS, sub)
            rows.extend(sub)
    write_rows(_outdir(cfg, "mms") / "summary.csv", SWEEP_COLUMNS, rows)
    return rows


def run_benchmark(cfg: RunConfig) -> list[dict]:
    """Steady convection functionals per (N, p); failures become NaN rows."""
    case = CASES[cfg.case]
    delta = cfg.delta[0]
    rows = []
    out = _outdir(cfg, case.name)
    for p in cfg.p:
        for N in cfg.N:
            mesh = build_structured(UNIT_SQUARE, N)
            row = dict(case=case.name, N=N, p=p, delta=delta)
            try:
                st = solve_steady(case, mesh, p, cfg.picard(delta))
            except (PicardDivergence, FloatingPointError) as exc:
                log.warning("%s N=%d p=%d failed: %s", case.name, N, p, exc)
                row.update(dofs=0, Nu=math.nan, u_rms=math.nan, W=math.nan, Phi=math.nan,
                           Delta=math.nan, eps_Nu=math.nan, eps_urms=math.nan,
                           converged=False, iterations=0)
            else:
                r = st.report
                row.update(dofs=r.dof_count, Nu=r.Nu, u_rms=r.u_rms, W=r.W, Phi=r.Phi,
                           Delta=r.Delta, eps_Nu=relative_error(r.Nu, case.Nu_ref),
                           eps_urms=relative_error(r.u_rms, case.u_rms_ref),
                           converged=st.converged, iterations=len(st.trace))
                out.mkdir(parents=True, exist_ok=True)
                st.write_trace(out / f"{N}_{p}_picard.csv")
            write_rows(out / f"{N}_{p}.csv", BENCH_COLUMNS, [row])
            rows.append(row)
    write_rows(out / "summary.csv", BENCH_COLUMNS, rows)
    return rows


def run_tracers(cfg: RunConfig) -> list[dict]:
    """Advect an equidistant particle cloud in a converged benchmark field."""
    case = CASES[cfg.case]
    N, p, delta = cfg.N[0], cfg.p[0], cfg.delta[0]
    mesh = build_structured(UNIT_SQUARE, N)
    st = solve_steady(case, mesh, p, cfg.picard(delta))
    out = _outdir(cfg, case.name)
    out.mkdir(parents=True, exist_ok=True)
    snap = out / f"{N}_{p}_particles.csv"
    if snap.exists():
        snap.unlink()

    particles = equidistant_particles(cfg.particles, mesh.bounds)
    mean, std = occupancy_stats(particles, mesh)
    rows = [dict(step=0, mean=mean, std=std, flagged=0)]
    if cfg.snapshot_every:
        write_snapshot(snap, 0, particles)

    def record(step, ps):
        m, s = occupancy_stats(ps, mesh)
        rows.append(dict(step=step, mean=m, std=s, flagged=ps.flagged))
        if cfg.snapshot_every and step % cfg.snapshot_every == 0:
            write_snapshot(snap, step, ps)

    advect_rk3(particles, st.phi, cfg.dt, cfg.steps, callback=record)
    write_rows(out / f"{N}_{p}.csv", ["step", "mean", "std", "flagged"], rows)
    write_rows(out / "summary.csv", ["step", "mean", "std", "flagged"], rows)
    return rows


RUNNERS = {"mms": run_mms, "delta_sweep": run_delta_sweep,
           "benchmark": run_benchmark, "tracers": run_tracers}

DEFAULTS = {
    "mms": {},
    "delta_sweep": {"N": [16], "delta": [0.05, 0.1, 0.2, 1.0, 1.5, 2.0, 4.0, 8.0]},
    "benchmark": {"N": [16, 32, 64], "p": [2]},
    "tracers": {"N": [32], "p": [2]},
}


def load_config(path) -> dict:
    import tomli
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="c0ripg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in ("mms", "delta-sweep", "benchmark", "tracers"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="TOML file with RunConfig keys")
        sp.add_argument("--N", type=int, nargs="+")
        sp.add_argument("--p", type=int, nargs="+")
        sp.add_argument("--delta", type=float, nargs="+")
        sp.add_argument("--out")
        sp.add_argument("--case", choices=sorted(CASES))
        sp.add_argument("--max-picard", dest="max_picard", type=int)
        sp.add_argument("--relax", type=float)
        sp.add_argument("--tol", type=float)
        if name == "tracers":
            sp.add_argument("--particles", type=int)
            sp.add_argument("--steps", type=int)
            sp.add_argument("--dt", type=float)
            sp.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    experiment = args.experiment.replace("-", "_")
    values = dict(DEFAULTS[experiment])
    if args.config:
        values.update(load_config(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "experiment":
            values[f.name] = v
    values["experiment"] = experiment
    return RunConfig(**values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = config_from_args(args)
    RUNNERS[cfg.experiment](cfg)
    return 0
