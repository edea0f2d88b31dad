# How small can the penalty parameter be?
#
# The penalty is fully determined by the mesh, the degree and the viscosity
# up to one factor delta. Above sqrt(2) the discrete operator is guaranteed
# to be positive definite. Well below it, Cholesky breaks down or the error
# blows up.
import warnings

from c0ripg.cli import sweep_point

warnings.simplefilter("ignore")   # we know delta <= sqrt(2) is risky, that's the point

N = 12
for p in (2, 3):
    base = None
    for delta in (0.05, 0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 4.0, 8.0):
        row = sweep_point(N, p, delta)
        if delta == 2.0:
            base = row["L2_u"]
        status = "SPD" if row["spd"] else "not SPD"
        print(f"p={p} delta={delta:5.2f}  {status:8s}  L2(u)={row['L2_u']:.3e}  DG={row['DG']:.3e}")
    print(f"p={p} reference error at delta=2: {base:.3e}\n")
