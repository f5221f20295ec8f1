"""Modified Ricci flow pairs (g, p) and the F-functional along them.

Given a Ricci flow (h~, f~) on [0, T] we solve the backward equation

    pt_t = -pt_rr/h~^2 + h~_r pt_r/h~^3 - sum_k d_k f~_kr pt_r/(h~^2 f~_k) + R~ pt,
    pt_r(j, t) = 0,  pt(., T) = 1,

then the ODE psi_t = pt_rho/(h~^2 pt) at rho = psi with psi(r, 0) = r, and set

    h = psi_r h~(psi),  f_i = f~_i(psi),  p = -log pt(psi).

The pair (g, p) solves

    f_it = -(ric_i + f_i f_ir p_r/h^2)/f_i,   h_t = -(zeta + p_rr - h_r p_r/h)/h,
    p_t = -Delta p - R,

and F(g, p) = int (R + |grad p|^2) e^{-p} dmu is non-decreasing when the
boundary is totally geodesic.  Fiber volumes are normalised to 1, so absolute
values of F depend on that convention.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import stencils
from .deturck import Trajectory, time_derivative
from .errors import GaugeDegenerate, HypothesisViolated, PositivityLost
from .geometry import (
    boundary_geometry,
    f_functional,
    integrate,
    ricci,
    ricci_from_derivatives,
    ricci_plus_hess,
    volume_element,
)

# mean curvature and conformal drift allowed before the strict hypotheses count as broken
HYPOTHESIS_TOL = 1e-6


def _d(space):
    return np.asarray(space.d, dtype=float)[:, None]


# ---------------------------------------------------------------------------
# scalar curvature

@dataclass(frozen=True)
class ScalarCurvature:
    """Scalar curvature of a flow, computed two ways.

    ``spatial`` comes from the curvature formula at every stored time;
    ``flow_identity`` is -h_t/h - sum d_k f_kt/f_k at interior times only.
    """

    times: np.ndarray
    spatial: np.ndarray
    flow_identity: np.ndarray

    @property
    def discrepancy(self) -> float:
        diff = self.flow_identity - self.spatial[1:-1]
        return float(np.max(np.abs(diff[:, 1:-1])))


def scalar_from_flow(traj: Trajectory, space) -> ScalarCurvature:
    """Scalar curvature of a Ricci flow trajectory (spatial trace and flow identity)."""
    if len(traj) < 3:
        raise ValueError("need at least three stored times")
    spatial = np.array([ricci(s, space).scalar for s in traj.states])
    ht = time_derivative(traj.times, traj.h)
    ft = time_derivative(traj.times, traj.f)
    flow = -ht / traj.h[1:-1] - np.sum(_d(space) * ft / traj.f[1:-1], axis=1)
    return ScalarCurvature(traj.times, spatial, flow)


# ---------------------------------------------------------------------------
# backward equation

def _backward_coefficients(traj, space, R):
    """Per-snapshot (a, b, c) with pt_s = a pt_rr + b pt_r + c pt in reversed time s = T - t."""
    dr = 1.0 / traj.N
    h, f = traj.h, traj.f
    hr = stencils.d1(h, dr)
    fr = stencils.d1(f, dr)
    a = 1.0 / h ** 2
    b = -hr / h ** 3 + np.sum(_d(space) * fr / f, axis=1) / h ** 2
    return a, b, -R


def solve_backward_p(traj: Trajectory, space, cfl: float = 0.25, R=None) -> np.ndarray:
    """Solve the backward equation for pt on the snapshot times of ``traj``.

    Parameters
    ----------
    traj : Trajectory
        Ricci flow (recovered, not gauge-fixed) covering [0, T].
    space : HomogeneousSpaceData
    cfl : float
        Sub-steps satisfy ds <= cfl * min(h~^2) * dr^2.
    R : ndarray, optional
        Scalar curvature per snapshot; defaults to the spatial formula.

    Returns
    -------
    ndarray
        pt with shape (K, N+1); pt[-1] is exactly 1.

    Raises
    ------
    PositivityLost
        If pt fails to stay positive.
    """
    if R is None:
        R = np.array([ricci(s, space).scalar for s in traj.states])
    a, b, c = _backward_coefficients(traj, space, np.asarray(R, dtype=float))
    dr = 1.0 / traj.N
    K = len(traj)
    out = np.empty((K, traj.N + 1))
    q = np.ones(traj.N + 1)
    out[-1] = q

    def rhs(q, lam, k):
        # coefficients linear in t between snapshots k and k+1; lam = 1 at t_{k+1}
        ca = a[k] + lam * (a[k + 1] - a[k])
        cb = b[k] + lam * (b[k + 1] - b[k])
        cc = c[k] + lam * (c[k + 1] - c[k])
        qr, qrr = stencils.slope_derivatives(q, dr, 0.0, 0.0)
        return ca * qrr + cb * qr + cc * q

    for k in range(K - 2, -1, -1):
        span = traj.times[k + 1] - traj.times[k]
        bound = cfl * dr ** 2 / max(a[k].max(), a[k + 1].max())
        m = max(1, math.ceil(span / bound))
        ds = span / m
        dlam = ds / span
        lam = 1.0
        for _ in range(m):
            k1 = rhs(q, lam, k)
            k2 = rhs(q + 0.5 * ds * k1, lam - 0.5 * dlam, k)
            k3 = rhs(q + 0.5 * ds * k2, lam - 0.5 * dlam, k)
            k4 = rhs(q + ds * k3, lam - dlam, k)
            q = q + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            lam -= dlam
        if not q.min() > 0.0:
            raise PositivityLost("backward potential lost positivity", traj.times[k])
        out[k] = q
    return out


# ---------------------------------------------------------------------------
# psi and assembly

def _psi_velocity(ptilde, traj):
    dr = 1.0 / traj.N
    pr = stencils.d1(ptilde, dr)
    pr[:, 0] = pr[:, -1] = 0.0
    return pr / (traj.h ** 2 * ptilde)


def solve_psi(ptilde, traj: Trajectory) -> np.ndarray:
    """Integrate psi_t = pt_rho/(h~^2 pt) at rho = psi from psi(r, 0) = r.

    One RK4 step per snapshot interval, velocity linear in t and a cubic
    spline in rho.

    Raises
    ------
    GaugeDegenerate
        If psi stops being strictly increasing in r.
    """
    ptilde = np.asarray(ptilde, dtype=float)
    if not ptilde.min() > 0.0:
        raise ValueError("ptilde must be positive")
    V = _psi_velocity(ptilde, traj)
    N = traj.N
    K = len(traj)
    psi = np.empty((K, N + 1))
    psi[0] = traj.r

    def vel(v, x):
        return stencils.interpolator(v, N)(x)

    for k in range(K - 1):
        dt = traj.times[k + 1] - traj.times[k]
        Vm = 0.5 * (V[k] + V[k + 1])
        x = psi[k]
        k1 = vel(V[k], x)
        k2 = vel(Vm, x + 0.5 * dt * k1)
        k3 = vel(Vm, x + 0.5 * dt * k2)
        k4 = vel(V[k + 1], x + dt * k3)
        psi[k + 1] = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if np.any(np.diff(psi[k + 1]) <= 0.0):
            raise GaugeDegenerate(f"psi not increasing at t={traj.times[k + 1]:.6g}")
    return psi


@dataclass(frozen=True)
class MRFPair:
    """A solution (g, p) of the modified flow built from the Ricci flow ``traj``."""

    traj: Trajectory
    ptilde: np.ndarray
    psi: np.ndarray
    h: np.ndarray
    f: np.ndarray
    p: np.ndarray

    @property
    def times(self):
        return self.traj.times

    @property
    def N(self):
        return self.traj.N

    @property
    def g(self) -> Trajectory:
        return Trajectory(self.traj.times, self.h, self.f)


def assemble_mrf(traj: Trajectory, ptilde, psi) -> MRFPair:
    """Pull the flow and potential back by psi.

    Raises
    ------
    GaugeDegenerate
        If psi_r <= 0 somewhere.
    """
    ptilde = np.asarray(ptilde, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if ptilde.shape != traj.h.shape or psi.shape != traj.h.shape:
        raise ValueError("ptilde and psi must share the trajectory grid")
    dr = 1.0 / traj.N
    h = np.empty_like(traj.h)
    f = np.empty_like(traj.f)
    p = np.empty_like(ptilde)
    for k in range(len(traj)):
        psi_r = stencils.d1(psi[k], dr)
        if np.any(psi_r <= 0.0):
            raise GaugeDegenerate(f"psi_r <= 0 at t={traj.times[k]:.6g}")
        vals = stencils.interpolator(np.vstack([traj.h[k], traj.f[k], ptilde[k]]), traj.N)(psi[k])
        h[k] = psi_r * vals[0]
        f[k] = vals[1:-1]
        p[k] = -np.log(vals[-1])
    return MRFPair(traj, ptilde, psi, h, f, p)


def build_pair(traj: Trajectory, space) -> MRFPair:
    """Backward potential, psi and assembly in one call."""
    ptilde = solve_backward_p(traj, space)
    return assemble_mrf(traj, ptilde, solve_psi(ptilde, traj))


# ---------------------------------------------------------------------------
# residuals

@dataclass(frozen=True)
class MRFResidual:
    """Max-norm residuals over nodes 1..N-1 at interior times."""

    times: np.ndarray
    h: np.ndarray
    f: np.ndarray  # (K-2, n)
    p: np.ndarray

    @property
    def metric(self):
        return np.maximum(self.h, np.max(self.f, axis=1))

    @property
    def max(self):
        return float(max(np.max(self.metric), np.max(self.p)))


def _mrf_rhs(h, f, p, space, dr):
    hr, fr, pr = stencils.d1(h, dr), stencils.d1(f, dr), stencils.d1(p, dr)
    frr, prr = stencils.d2(f, dr), stencils.d2(p, dr)
    zeta, ric, scalar = ricci_from_derivatives(space, h, hr, f, fr, frr)
    h2 = h * h
    ft = -(ric + f * fr * pr / h2) / f
    ht = -(zeta + prr - hr * pr / h) / h
    lap = (prr - hr * pr / h + np.sum(_d(space) * fr / f, axis=0) * pr) / h2
    pt = -lap - scalar
    return ht, ft, pt


def mrf_residual(pair: MRFPair, space) -> MRFResidual:
    """Residual of the modified flow with centred time differences."""
    if len(pair.times) < 3:
        raise ValueError("need at least three stored times")
    dr = 1.0 / pair.N
    ht = time_derivative(pair.times, pair.h)
    ft = time_derivative(pair.times, pair.f)
    pt = time_derivative(pair.times, pair.p)
    rh, rf, rp = [], [], []
    for k in range(1, len(pair.times) - 1):
        eh, ef, ep = _mrf_rhs(pair.h[k], pair.f[k], pair.p[k], space, dr)
        rh.append(np.max(np.abs(ht[k - 1] - eh)[1:-1]))
        rf.append(np.max(np.abs(ft[k - 1] - ef)[:, 1:-1], axis=1))
        rp.append(np.max(np.abs(pt[k - 1] - ep)[1:-1]))
    return MRFResidual(pair.times[1:-1], np.array(rh), np.array(rf), np.array(rp))


# ---------------------------------------------------------------------------
# monotonicity

@dataclass(frozen=True)
class MonotonicityReport:
    """Time series of F and its derivative, aligned with ``times``.

    ``frak_F`` and ``xi`` have shape (2, K), one row per boundary component.
    ``monotone_tol`` is the slack allowed per step when judging monotonicity:
    ten times the step length times the largest gap between the two
    derivative estimates, which is what residuals of the pair produce.
    """

    times: np.ndarray
    F_values: np.ndarray
    dF_dt_fd: np.ndarray
    dF_dt_formula: np.ndarray
    frak_F: np.ndarray
    xi: np.ndarray
    general_formula_rhs: np.ndarray
    mean_curvature: np.ndarray
    hypothesis_violated: tuple
    monotone_tol: np.ndarray

    @property
    def increments(self):
        return np.diff(self.F_values)

    @property
    def monotone(self) -> bool:
        return bool(np.all(self.increments >= -self.monotone_tol))

    @property
    def formula_gap(self):
        return np.abs(self.dF_dt_fd - self.dF_dt_formula) / np.maximum(1.0, np.abs(self.dF_dt_formula))

    def to_json(self) -> dict:
        return {
            "times": self.times.tolist(),
            "F_values": self.F_values.tolist(),
            "dF_dt_fd": self.dF_dt_fd.tolist(),
            "dF_dt_formula": self.dF_dt_formula.tolist(),
            "frak_F": self.frak_F.tolist(),
            "xi": self.xi.tolist(),
            "general_formula_rhs": self.general_formula_rhs.tolist(),
            "mean_curvature": self.mean_curvature.tolist(),
            "hypothesis_violated": list(self.hypothesis_violated),
            "monotone_tol": self.monotone_tol.tolist(),
            "monotone": self.monotone,
            "fiber_volume": 1.0,
        }


def monotonicity_report(pair: MRFPair, space, strict: bool = False) -> MonotonicityReport:
    """F, both estimates of dF/dt, and the boundary terms along a modified-flow pair.

    With ``strict=True`` a :class:`HypothesisViolated` warning is issued when
    the boundary has mean curvature above 1e-6 or its conformal class drifts.
    """
    times = pair.times
    K = times.size
    if K < 3:
        raise ValueError("need at least three stored times")
    N = pair.N
    d = np.asarray(space.d, dtype=float)
    F = np.empty(K)
    formula = np.empty(K)
    general_int = np.empty(K)
    zeta_b = np.empty((2, K))
    prr_b = np.empty((2, K))
    h_b = np.empty((2, K))
    H = np.empty((2, K))
    ric_II = np.empty((2, K))
    weight = np.empty((2, K))
    for k in range(K):
        s = pair.g.state(k)
        curv = ricci(s, space)
        rh = ricci_plus_hess(s, pair.p[k], space, curv)
        vol = volume_element(s, space)
        ep = np.exp(-pair.p[k])
        F[k] = f_functional(s, pair.p[k], space)
        formula[k] = 2.0 * integrate(rh.normsq * ep * vol.w, N)
        general_int[k] = formula[k]
        prr = stencils.d2(pair.p[k], s.dr)
        for j, m in ((0, 0), (1, -1)):
            bg = boundary_geometry(s, space, j)
            fj = s.f[:, m]
            zeta_b[j, k] = curv.zeta[m]
            prr_b[j, k] = prr[m]
            h_b[j, k] = s.h[m]
            H[j, k] = bg.H
            ric_II[j, k] = float(np.sum(d * curv.ric_coeff[:, m] * bg.II_coeff / fj ** 4))
            weight[j, k] = ep[m] * vol.wb[j]

    # conformal factors relative to the middle of the run
    f_end = np.stack([pair.f[:, :, 0], pair.f[:, :, -1]])  # (2, K, n)
    ref = np.array([np.interp(0.5 * (times[0] + times[-1]), times, f_end[j, :, 0]) for j in range(2)])
    xi = f_end[:, :, 0] / ref[:, None]
    xi_t = np.gradient(xi, times, axis=1, edge_order=2)
    hH_t = np.gradient(h_b * H, times, axis=1, edge_order=2)
    H_t = np.gradient(H, times, axis=1, edge_order=2)
    h2 = h_b ** 2
    frak = -zeta_b * H / h2 - (xi_t / xi) * H - hH_t / h_b - prr_b * H / h2
    general = general_int + 2.0 * np.sum((ric_II - H_t) * weight, axis=0)

    dF_fd = np.gradient(F, times, edge_order=2)
    gap = np.max(np.abs(dF_fd - formula))
    tol = 10.0 * np.diff(times) * gap

    drift = np.zeros(2)
    if space.n > 1:
        ratios = f_end / f_end[:, :, :1]
        drift = np.max(np.abs(ratios - ratios[:, :1, :]), axis=(1, 2))
    violated = tuple(bool(np.max(np.abs(H[j])) > HYPOTHESIS_TOL or drift[j] > HYPOTHESIS_TOL) for j in range(2))
    if strict and any(violated):
        warnings.warn(HypothesisViolated(
            f"boundary hypotheses fail at r={[j for j in range(2) if violated[j]]}: "
            f"max|H|={np.max(np.abs(H)):.3g}, conformal drift={drift.max():.3g}"), stacklevel=2)
    return MonotonicityReport(times, F, dF_fd, formula, frak, xi, general, H, violated, tol)
