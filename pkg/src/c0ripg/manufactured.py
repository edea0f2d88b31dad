"""Closed-form manufactured Stokes solution on (-1, 1)^2.

phi = sin(pi x) sin(pi y) / pi, mu = 1 + sin^2(pi x) sin^2(pi y), pressure
zero. The forcing ``f = -div(2 mu eps(u))`` was derived symbolically and is
cross-checked against finite differences in the tests.
"""

import numpy as np

PI = np.pi
DOMAIN = ((-1.0, 1.0), (-1.0, 1.0))


def stream_function(x, y):
    return np.sin(PI * x) * np.sin(PI * y) / PI


def velocity(x, y):
    return np.array([np.sin(PI * x) * np.cos(PI * y),
                     -np.cos(PI * x) * np.sin(PI * y)])


def velocity_gradient(x, y):
    """Rows are velocity components, columns d/dx, d/dy."""
    sx, cx = np.sin(PI * x), np.cos(PI * x)
    sy, cy = np.sin(PI * y), np.cos(PI * y)
    return PI * np.array([[cx * cy, -sx * sy],
                          [sx * sy, -cx * cy]])


def viscosity(x, y):
    return 1.0 + np.sin(PI * x) ** 2 * np.sin(PI * y) ** 2


def force(x, y):
    sx, cx = np.sin(PI * x), np.cos(PI * x)
    sy, cy = np.sin(PI * y), np.cos(PI * y)
    base = 1.0 + sx ** 2 * sy ** 2
    fx = -2.0 * PI ** 2 * cy * sx * (2.0 * cx ** 2 * sy ** 2 - base)
    fy = 2.0 * PI ** 2 * cx * sy * (2.0 * cy ** 2 * sx ** 2 - base)
    return np.array([fx, fy])


WALLS = ("bottom", "top", "left", "right")


def solve(N: int, p: int, delta: float = 2.0):
    """Solve the manufactured problem on an N x N mesh.

    The stream function is fixed to zero on all walls and the tangential
    velocity is imposed weakly through the boundary facets. Returns
    ``(phi_h, viscosity, penalty)``.
    """
    from .mesh import build_structured
    from .ripg import ViscosityField, solve_stokes
    from .space import build_space

    mesh = build_structured(DOMAIN, N)
    space = build_space(mesh, p, {t: 0.0 for t in WALLS})
    mu = ViscosityField.from_function(viscosity)
    phi, penalty = solve_stokes(space, mu, delta, force=force, zero_penetration=WALLS,
                                boundary_velocity=velocity)
    return phi, mu, penalty


def errors(phi_h, mu, penalty):
    """(L2 phi, L2 u, H1 u, DG) errors of a manufactured solve."""
    from .analysis import error_norms
    return error_norms(phi_h, stream_function, velocity, velocity_gradient,
                       mu, penalty, WALLS)
