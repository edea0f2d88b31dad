# Convergence on a manufactured solution.
#
# The exact stream function is sin(pi x) sin(pi y) / pi on (-1, 1)^2 with a
# viscosity that varies between 1 and 2. We solve on a sequence of meshes and
# watch the errors fall at the expected rates: p - 1 in the DG energy norm and
# p in the L2 norm of the velocity.
import numpy as np

from c0ripg import manufactured
from c0ripg.analysis import convergence_rates, divergence_defect

levels = [4, 8, 16, 32]
names = ["L2(phi)", "L2(u)", "H1(u)", "DG"]

for p in (2, 3):
    errors, h = [], []
    for N in levels:
        phi, mu, penalty = manufactured.solve(N, p)
        errors.append(manufactured.errors(phi, mu, penalty))
        h.append(phi.dofmap.mesh.h)
        print(f"p={p} N={N:3d} dofs={phi.dofmap.total_dofs:6d}  "
              + "  ".join(f"{n}={e:.3e}" for n, e in zip(names, errors[-1])))
    errors = np.array(errors)
    slopes = [convergence_rates(errors[:, k], h).slope for k in range(4)]
    print(f"p={p} slopes: " + ", ".join(f"{n} {s:.2f}" for n, s in zip(names, slopes)))

# The velocity is a curl, so it is divergence free at every point, not only
# in a weak sense. Check it on the last solve.
div, umax = divergence_defect(phi)
print(f"max |div u| = {div:.1e}  (max |u| = {umax:.3f})")
