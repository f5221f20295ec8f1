"""Independent cross-checks for the curvature and solver code.

``warped_ricci_classical`` evaluates the textbook Ricci tensor of a doubly
warped product h(r)^2 dr^2 + f(r)^2 g_F over an Einstein fiber using exact
symbolic derivatives, so it shares no differencing code with
:func:`symflow.geometry.ricci`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stencils
from .bcdsl import as_expr, differentiate, eval_expr
from .errors import DegenerateFit


def warped_ricci_classical(h, f, fiber_dim: int, fiber_einstein: float, r):
    """Ricci tensor of h^2 dr^2 + f^2 g_F where Ric(g_F) = fiber_einstein * g_F.

    Parameters
    ----------
    h, f : str or Expr
        Profiles as expressions in ``r``.
    fiber_dim : int
        Dimension m of the fiber.
    fiber_einstein : float
        Einstein constant of the unit fiber metric.
    r : float or ndarray
        Evaluation points.

    Returns
    -------
    dict
        ``ric_rr`` (coefficient of dr^2) and ``ric_fiber_coeff`` (coefficient of
        g_F, i.e. of Q for cohomogeneity-one data).
    """
    h, f = as_expr(h, variables=("r",)), as_expr(f, variables=("r",))
    env = {"r": np.asarray(r, dtype=float)}

    def ev(e):
        return np.broadcast_to(eval_expr(e, env), env["r"].shape).astype(float)

    hp = differentiate(h, "r")
    fp = differentiate(f, "r")
    fpp = differentiate(fp, "r")
    H, F, Hp, Fp, Fpp = ev(h), ev(f), ev(hp), ev(fp), ev(fpp)
    m = fiber_dim
    ric_rr = -m * (Fpp / F - Hp * Fp / (H * F))
    fiber = (fiber_einstein
             - F * Fpp / H ** 2
             + F * Hp * Fp / H ** 3
             - (m - 1) * Fp ** 2 / H ** 2)
    if ric_rr.ndim == 0:
        return {"ric_rr": float(ric_rr), "ric_fiber_coeff": float(fiber)}
    return {"ric_rr": ric_rr, "ric_fiber_coeff": fiber}


def fd_check(samples, analytic, include_ends: bool = False) -> float:
    """Max error of the fourth-order stencil derivative of ``samples`` against ``analytic``.

    By default only nodes served by the centred stencil (2..N-2) are compared.
    """
    u = np.asarray(samples, dtype=float)
    N = u.shape[-1] - 1
    err = np.abs(stencils.d1(u, 1.0 / N) - np.asarray(analytic, dtype=float))
    if not include_ends:
        err = err[..., 2:-2]
    return float(np.max(err))


@dataclass(frozen=True)
class OrderEstimate:
    resolutions: tuple
    errors: tuple
    slope: float


def estimate_order(resolutions, errors) -> OrderEstimate:
    """Least-squares slope of log(error) against log(1/N).

    Raises
    ------
    DegenerateFit
        Fewer than three points, non-positive errors, errors that grow by more
        than 10x under refinement, or errors that do not change at all.
    """
    N = np.asarray(resolutions, dtype=float)
    e = np.asarray(errors, dtype=float)
    if N.size < 3 or N.size != e.size:
        raise DegenerateFit("need at least three (N, error) pairs")
    if np.any(~np.isfinite(e)) or np.any(e <= 0):
        raise DegenerateFit("errors must be positive and finite")
    order = np.argsort(N)
    N, e = N[order], e[order]
    if np.any(e[1:] / e[:-1] > 10.0):
        raise DegenerateFit("errors are non-monotone by more than 10x")
    if np.ptp(np.log(e)) < 1e-9:
        raise DegenerateFit("errors do not change under refinement")
    slope = np.polyfit(np.log(1.0 / N), np.log(e), 1)[0]
    return OrderEstimate(tuple(N.tolist()), tuple(e.tolist()), float(slope))
