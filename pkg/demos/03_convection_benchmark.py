# Steady thermal convection in a unit box heated from below.
#
# The stream-function Stokes solve and a temperature solve are alternated
# until the temperature stops changing. For the isoviscous case the Stokes
# matrix never changes, so it is factorised once.
import sys

from c0ripg.heat import CASES, PicardOptions, solve_steady
from c0ripg.mesh import build_structured

case = CASES[sys.argv[1] if len(sys.argv) > 1 else "BB1a"]
print(f"{case.name}: Ra={case.Ra:g} dmu_T={case.delta_mu_T:g} dmu_z={case.delta_mu_z:g} "
      f"sigma_Y={case.sigma_Y:g}")

for N in (8, 16, 24):
    state = solve_steady(case, build_structured(((0, 1), (0, 1)), N), 2, PicardOptions())
    r = state.report
    print(f"N={N:2d} iterations={len(state.trace):3d} converged={state.converged}  "
          f"Nu={r.Nu:.5f} (ref {case.Nu_ref})  u_rms={r.u_rms:.4f} (ref {case.u_rms_ref})  "
          f"Delta={r.Delta:.1e}")

# Energy balance: the work done by buoyancy, int T u_y, must equal the
# viscous dissipation divided by Ra. Delta measures the mismatch.
print(f"W={r.W:.6f}  Phi/Ra={r.Phi / case.Ra:.6f}")
print(f"viscosity range in the last iterate: {state.trace[-1][4]:.3g} .. {state.trace[-1][5]:.3g}")
