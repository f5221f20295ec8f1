"""Finite-difference stencils on the uniform grid r_m = m/N, and interpolation in r.

All derivative helpers act on the last axis and return arrays of the same
shape.  Interior nodes use centred five-point stencils; the two nodes at each
end use one-sided stencils of the same (fourth) order.
"""

import numpy as np
from scipy.interpolate import CubicSpline

# first derivative, nodes 0 and 1 (mirror with a sign flip at the far end)
_D1_0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_D1_1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0
# second derivative, nodes 0 and 1 (six-point, fourth order)
_D2_0 = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0
_D2_1 = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0
# ghost nodes u_{-1}, u_{-2} from the quintic through u_0..u_4 with slope g at the end;
# the last column multiplies g*dr
_GHOST_1 = np.array([-65.0, 120.0, -60.0, 20.0, -3.0, -60.0]) / 12.0
_GHOST_2 = np.array([-570.0, 960.0, -540.0, 192.0, -30.0, -360.0]) / 12.0


def grid(N):
    return np.linspace(0.0, 1.0, N + 1)


def d1(u, dr):
    """Fourth-order first derivative along the last axis."""
    u = np.asarray(u, dtype=float)
    u = u - u[..., :1]  # constants difference to exactly zero
    out = np.empty_like(u)
    out[..., 2:-2] = (u[..., :-4] - 8.0 * u[..., 1:-3] + 8.0 * u[..., 3:-1] - u[..., 4:]) / 12.0
    out[..., 0] = u[..., :5] @ _D1_0
    out[..., 1] = u[..., :5] @ _D1_1
    out[..., -1] = -(u[..., :-6:-1] @ _D1_0)
    out[..., -2] = -(u[..., :-6:-1] @ _D1_1)
    return out / dr


def d2(u, dr):
    """Fourth-order second derivative along the last axis."""
    u = np.asarray(u, dtype=float)
    u = u - u[..., :1]
    out = np.empty_like(u)
    out[..., 2:-2] = (-u[..., :-4] + 16.0 * u[..., 1:-3] - 30.0 * u[..., 2:-2]
                      + 16.0 * u[..., 3:-1] - u[..., 4:]) / 12.0
    out[..., 0] = u[..., :6] @ _D2_0
    out[..., 1] = u[..., :6] @ _D2_1
    out[..., -1] = u[..., :-7:-1] @ _D2_0
    out[..., -2] = u[..., :-7:-1] @ _D2_1
    return out / dr ** 2


def end_d1(u, dr, j):
    """One-sided fourth-order first derivative at r = j (j in {0, 1})."""
    u = np.asarray(u, dtype=float)
    u = u - u[..., :1] if j == 0 else u - u[..., -1:]
    if j == 0:
        return (u[..., :5] @ _D1_0) / dr
    return -(u[..., :-6:-1] @ _D1_0) / dr


def interpolator(values, N):
    """C^2 cubic spline through nodal ``values`` (last axis) on the uniform grid."""
    return CubicSpline(grid(N), values, axis=-1)


def slope_padded(u, dr, g0, g1):
    """``u`` with two ghost nodes per end matching the prescribed end slopes g0, g1.

    The ghosts are read off the quintic through u_0..u_4 (or u_N..u_{N-4})
    with the given slope at the end node.
    """
    u = np.asarray(u, dtype=float)
    P = np.empty(u.shape[:-1] + (u.shape[-1] + 4,))
    P[..., 2:-2] = u
    lo, hi = u[..., :5], u[..., :-6:-1]
    s0 = dr * np.asarray(g0, dtype=float)
    s1 = dr * np.asarray(g1, dtype=float)
    P[..., 1] = lo @ _GHOST_1[:5] + _GHOST_1[5] * s0
    P[..., 0] = lo @ _GHOST_2[:5] + _GHOST_2[5] * s0
    P[..., -2] = hi @ _GHOST_1[:5] - _GHOST_1[5] * s1
    P[..., -1] = hi @ _GHOST_2[:5] - _GHOST_2[5] * s1
    return P


def slope_derivatives(u, dr, g0, g1):
    """Fourth-order (u_r, u_rr) when the end slopes u_r(0) = g0, u_r(1) = g1 are prescribed.

    Centred five-point stencils apply at every node of the ghost-padded
    array, and u_r equals the prescribed slope exactly at the ends.
    """
    P = slope_padded(u, dr, g0, g1)
    a, b, c, d = P[..., :-4], P[..., 1:-3], P[..., 3:-1], P[..., 4:]
    ur = (a - d + 8.0 * (c - b)) * (1.0 / (12.0 * dr))
    urr = (16.0 * (b + c) - (a + d) - 30.0 * P[..., 2:-2]) * (1.0 / (12.0 * dr * dr))
    ur[..., 0] = g0
    ur[..., -1] = g1
    return ur, urr
