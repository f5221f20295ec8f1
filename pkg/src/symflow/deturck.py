"""Gauge-fixed Ricci flow with boundary, gauge recovery and flow residuals.

The reduced Ricci flow for (h, f_1..f_n) is only weakly parabolic.  We
integrate instead the strictly parabolic gauge-fixed system for the barred
unknowns

    hb_t  = hb_rr/hb^2 - 2 hb_r^2/hb^3 + sum_k d_k fb_kr^2/(hb fb_k^2) + A_r
    fb_it = fb_irr/hb^2 - fb_ir^2/(hb^2 fb_i) - S_i(fb)/fb_i - beta_i/(2 fb_i)
            + fb_ir A / hb

with A(r) = -h^_r/h^^2 + sum_k d_k f^_kr/(h^ f^_k) built from the initial
profiles, Neumann-type boundary data

    fb_ir(j) = (-1)^(j+1) hb F_{j,i}(t, fb^2) / fb_i
    hb_r(j)  = (-1)^(j+1) hb^2 sum_k d_k F_{j,k}(t, fb^2) / fb_k^2 - hb^2 A(j)

and hb = h^, fb = f^ at t = 0.  The gauge phi then solves

    phi_t = -(hb_rho/hb^3 - sum_k d_k fb_krho/(hb^2 fb_k) + A(rho)/hb) at rho = phi,

phi(r, 0) = r, and h = phi_r hb(phi), f_i = fb_i(phi) solve the Ricci flow.

Time stepping is classical RK4 with a CFL-limited step; the boundary
conditions enter through two ghost nodes per end and unknown.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import stencils
from .bcdsl import BCSpec, InitialProfiles, check_compatibility, compile_expr, differentiate
from .errors import GaugeDegenerate, IncompatibleData, PositivityLost, StabilityBound
from .geometry import MIN_CELLS, FlowState, gamma_terms, ricci_from_derivatives

log = logging.getLogger(__name__)

COMPAT_TOL = 1e-10
# fraction of u/|u_t| allowed per step; only binds close to a singular time
RATE_LIMIT = 0.1
# RK4 covers |lambda dt| <= 2.78 on the negative axis; the ghost closure has
# spectral radius about 8.9/dr^2 for unit diffusion
MAX_CFL = 0.3
# relative slack so a step stretched onto a snapshot time is not rejected
LANDING_SLACK = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    N: int = 128
    T_end: float = 0.1
    cfl: float = 0.2
    min_scale: float = 1e-6
    snapshot_every: int = 1
    snapshot_dt: float | None = None

    def __post_init__(self):
        if not 0.0 < self.cfl <= MAX_CFL:
            raise ValueError(f"cfl must lie in (0, {MAX_CFL}]")
        if not self.T_end > 0.0:
            raise ValueError("T_end must be positive")
        if self.N < MIN_CELLS:
            raise ValueError(f"N must be at least {MIN_CELLS}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        if self.snapshot_dt is not None and not self.snapshot_dt > 0.0:
            raise ValueError("snapshot_dt must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of (h, f) at increasing times.

    ``h`` has shape (K, N+1) and ``f`` shape (K, n, N+1).  For a solver
    trajectory these are the barred (gauge-fixed) fields; ``phi`` and
    ``recovered`` are filled in by :func:`solve_gauge`.
    """

    times: np.ndarray
    h: np.ndarray
    f: np.ndarray
    phi: np.ndarray | None = None
    recovered: "Trajectory | None" = None
    singular_time: float | None = None
    steps: int = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("times must be a non-empty 1-D array")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))
        object.__setattr__(self, "f", np.asarray(self.f, dtype=float))

    def __len__(self):
        return self.times.size

    @property
    def N(self):
        return self.h.shape[1] - 1

    @property
    def n(self):
        return self.f.shape[1]

    @property
    def r(self):
        return stencils.grid(self.N)

    @property
    def status(self):
        return "singular" if self.singular_time is not None else "completed"

    def state(self, k) -> FlowState:
        return FlowState(self.h[k], self.f[k], self.times[k])

    @property
    def states(self):
        return [self.state(k) for k in range(len(self))]

    @classmethod
    def from_states(cls, states, **kw):
        return cls(np.array([s.t for s in states]), np.array([s.h for s in states]),
                   np.array([s.f for s in states]), **kw)


class DeTurckSystem:
    """The gauge-fixed system for one (space, boundary map, initial data, N)."""

    def __init__(self, space, bc: BCSpec, init: InitialProfiles, N: int):
        if not (space.n == bc.n == init.n):
            raise ValueError("space, boundary map and initial profiles disagree on n")
        if N < MIN_CELLS:
            raise ValueError(f"N must be at least {MIN_CELLS}")
        self.space, self.bc, self.init, self.N = space, bc, init, N
        self.dr = 1.0 / N
        self.r = stencils.grid(N)
        self.d = np.asarray(space.d, dtype=float)
        self.beta = np.asarray(space.beta, dtype=float)
        self.gamma = np.asarray(space.gamma)
        self.has_gamma = bool(np.any(self.gamma))
        self.half_beta = (self.beta / 2.0)[:, None]
        A = init.gauge_coefficient(space.d)
        self.A_expr = A
        self._A = compile_expr(A)
        self.A = self.gauge_coefficient(self.r)
        self.A_r = np.broadcast_to(compile_expr(differentiate(A, "r"))({"r": self.r}), self.r.shape).astype(float)

    def gauge_coefficient(self, rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(self._A({"r": rho}), rho.shape).astype(float)
        return out

    def initial_state(self) -> np.ndarray:
        return self.init.sample(self.r)

    # -- boundary data -------------------------------------------------------
    def boundary_slopes(self, U, t) -> np.ndarray:
        """Prescribed r-derivatives of (hb, fb_1..fb_n) at r = 0 and r = 1; shape (n+1, 2)."""
        g = np.empty((U.shape[0], 2))
        for j, m in ((0, 0), (1, -1)):
            h, f = U[0, m], U[1:, m]
            F = self.bc.evaluate(j, t, f * f)
            sign = -1.0 if j == 0 else 1.0
            g[1:, j] = sign * h * F / f
            g[0, j] = h * h * (sign * np.dot(self.d, F / (f * f)) - self.A[m])
        return g

    def ghosts(self, U, t):
        g = self.boundary_slopes(U, t)
        P = stencils.slope_padded(U, self.dr, g[:, 0], g[:, 1])
        return np.stack([P[:, 1], P[:, -2]], axis=1), g

    # -- spatial operator ----------------------------------------------------
    def derivatives(self, U, t):
        """(U_r, U_rr) by five-point stencils with two slope-matched ghost nodes per end."""
        g = self.boundary_slopes(U, t)
        return stencils.slope_derivatives(U, self.dr, g[:, 0], g[:, 1])

    def rhs(self, U, t, min_scale=0.0):
        if not U.min() > min_scale:
            raise PositivityLost(f"a scale function dropped below {min_scale:g}", t)
        Ur, Urr = self.derivatives(U, t)
        h, hr, hrr = U[0], Ur[0], Urr[0]
        f, fr, frr = U[1:], Ur[1:], Urr[1:]
        inv_h = 1.0 / h
        inv_h2 = inv_h * inv_h
        inv_f = 1.0 / f
        lf = fr * inv_f
        out = np.empty_like(U)
        out[0] = (hrr - 2.0 * hr * hr * inv_h) * inv_h2 + (self.d @ (lf * lf)) * inv_h + self.A_r
        fb = (frr - fr * lf) * inv_h2 - self.half_beta * inv_f + fr * (self.A * inv_h)
        if self.has_gamma:
            fb -= gamma_terms(f, self.gamma) * inv_f
        out[1:] = fb
        return out

    def stability_bound(self, U, cfl):
        return cfl * float(np.min(U[0])) ** 2 * self.dr ** 2

    def step(self, U, t, dt, cfl=MAX_CFL, min_scale=0.0, k1=None):
        """One classical RK4 step."""
        if dt == 0.0:
            return U.copy()
        bound = self.stability_bound(U, cfl)
        if dt > bound * (1.0 + LANDING_SLACK):
            raise StabilityBound(f"dt={dt:.3g} exceeds the explicit bound {bound:.3g}")
        k1 = self.rhs(U, t, min_scale) if k1 is None else k1
        k2 = self.rhs(U + 0.5 * dt * k1, t + 0.5 * dt, min_scale)
        k3 = self.rhs(U + 0.5 * dt * k2, t + 0.5 * dt, min_scale)
        k4 = self.rhs(U + dt * k3, t + dt, min_scale)
        out = U + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not out.min() > min_scale:
            raise PositivityLost(f"a scale function dropped below {min_scale:g}", t + dt)
        return out

    # -- gauge ---------------------------------------------------------------
    def gauge_field(self, U, t):
        """Nodal values of (hb_r/hb^3 - sum_k d_k fb_kr/(hb^2 fb_k)) and hb."""
        Ur = stencils.d1(U, self.dr)
        Ur[:, 0], Ur[:, -1] = self.boundary_slopes(U, t).T
        h, f = U[0], U[1:]
        s = Ur[0] / h ** 3 - np.sum(self.d[:, None] * Ur[1:] / f, axis=0) / h ** 2
        return s


def _system(space, bc, init, N_or_state):
    N = N_or_state.N if isinstance(N_or_state, FlowState) else int(N_or_state)
    return DeTurckSystem(space, bc, init, N)


def _pack(s: FlowState):
    return np.vstack([s.h[None, :], s.f])


def rhs_deturck(s: FlowState, t, space, bc, init) -> np.ndarray:
    """Time derivative of (hb, fb_1..fb_n), stacked with shape (n+1, N+1)."""
    return _system(space, bc, init, s).rhs(_pack(s), t)


@dataclass(frozen=True)
class GhostValues:
    values: np.ndarray  # (n+1, 2): ghost node left of r=0 and right of r=1
    slopes: np.ndarray  # (n+1, 2): r-derivative they impose


def apply_bc(s: FlowState, t, space, bc, init) -> GhostValues:
    ghost, g = _system(space, bc, init, s).ghosts(_pack(s), t)
    return GhostValues(ghost, g)


def step(s: FlowState, t, dt, space, bc, init, cfl=MAX_CFL, min_scale=0.0) -> FlowState:
    """Advance a barred state by one RK4 step of size ``dt``."""
    U = _system(space, bc, init, s).step(_pack(s), t, dt, cfl=cfl, min_scale=min_scale)
    return FlowState(U[0], U[1:], t + dt)


def solve(config: SolverConfig, space, bc: BCSpec, init: InitialProfiles) -> Trajectory:
    """Integrate the gauge-fixed system from t=0 to ``config.T_end``.

    Stops early, recording ``singular_time``, when a scale function falls
    below ``config.min_scale``.

    Raises
    ------
    IncompatibleData
        If the boundary map and initial profiles disagree at t=0.
    """
    res = check_compatibility(bc, init, space)
    if np.max(np.abs(res)) >= COMPAT_TOL:
        raise IncompatibleData(res, COMPAT_TOL)
    sys = DeTurckSystem(space, bc, init, config.N)
    U = sys.initial_state()
    if np.any(U <= 0):
        raise PositivityLost("initial profiles must be positive", 0.0)
    t = 0.0
    times, hs, fs = [0.0], [U[0].copy()], [U[1:].copy()]
    T = config.T_end
    if config.snapshot_dt is not None:
        n_snap = max(1, int(round(T / config.snapshot_dt)))
        targets = np.linspace(0.0, T, n_snap + 1)[1:]
    else:
        targets = np.array([T])
    ti = 0
    nsteps = 0
    singular = None
    while ti < len(targets):
        target = targets[ti]
        try:
            k1 = sys.rhs(U, t, config.min_scale)
            dt = sys.stability_bound(U, config.cfl)
            with np.errstate(divide="ignore"):
                rate = np.min(np.abs(U) / np.maximum(np.abs(k1), 1e-300))
            dt = min(dt, RATE_LIMIT * rate)
            landing = target - t <= dt * (1.0 + LANDING_SLACK)
            if landing:
                dt = target - t
            U = sys.step(U, t, dt, cfl=config.cfl, min_scale=config.min_scale, k1=k1)
        except PositivityLost as exc:
            singular = t if exc.time is None else min(exc.time, t)
            log.info("positivity lost near t=%.6g after %d steps", singular, nsteps)
            break
        nsteps += 1
        t = float(target) if landing else t + dt
        if landing:
            ti += 1
        if landing or (config.snapshot_dt is None and nsteps % config.snapshot_every == 0):
            times.append(t)
            hs.append(U[0].copy())
            fs.append(U[1:].copy())
    return Trajectory(np.array(times), np.array(hs), np.array(fs), singular_time=singular, steps=nsteps)


def _time_weights(times, k):
    """Second-order three-point weights for d/dt at interior snapshot k."""
    h0 = times[k] - times[k - 1]
    h1 = times[k + 1] - times[k]
    return (-h1 / (h0 * (h0 + h1)), (h1 - h0) / (h0 * h1), h0 / (h1 * (h0 + h1)))


def time_derivative(times, values):
    """Centred (non-uniform) time derivative at interior snapshots; shape (K-2, ...)."""
    times = np.asarray(times, dtype=float)
    out = []
    for k in range(1, times.size - 1):
        a, b, c = _time_weights(times, k)
        out.append(a * values[k - 1] + b * values[k] + c * values[k + 1])
    return np.array(out)


def solve_gauge(traj: Trajectory, space, bc: BCSpec, init: InitialProfiles) -> Trajectory:
    """Integrate the gauge ODE along a barred trajectory and recover the Ricci flow.

    RK4 in t with one step per snapshot interval, fields linear in t between
    snapshots and C^2 cubic splines in rho.

    Raises
    ------
    GaugeDegenerate
        If phi_r <= 0 somewhere (the trajectory is too coarse in t or r).
    """
    sys = DeTurckSystem(space, bc, init, traj.N)
    r = sys.r
    K = len(traj)
    U = np.concatenate([traj.h[:, None, :], traj.f], axis=1)
    S = np.array([sys.gauge_field(U[k], traj.times[k]) for k in range(K)])

    def velocity(S_nodes, h_nodes, phi):
        s_int = stencils.interpolator(np.vstack([S_nodes, h_nodes]), traj.N)(phi)
        return -(s_int[0] + sys.gauge_coefficient(phi) / s_int[1])

    phi = np.empty((K, traj.N + 1))
    phi[0] = r
    for k in range(K - 1):
        dt = traj.times[k + 1] - traj.times[k]
        Sm = 0.5 * (S[k] + S[k + 1])
        hm = 0.5 * (U[k, 0] + U[k + 1, 0])
        p = phi[k]
        k1 = velocity(S[k], U[k, 0], p)
        k2 = velocity(Sm, hm, p + 0.5 * dt * k1)
        k3 = velocity(Sm, hm, p + 0.5 * dt * k2)
        k4 = velocity(S[k + 1], U[k + 1, 0], p + dt * k3)
        phi[k + 1] = p + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    rec_h = np.empty_like(traj.h)
    rec_f = np.empty_like(traj.f)
    for k in range(K):
        phi_r = stencils.d1(phi[k], sys.dr)
        if np.any(phi_r <= 0.0):
            raise GaugeDegenerate(f"phi_r <= 0 at t={traj.times[k]:.6g}")
        vals = stencils.interpolator(U[k], traj.N)(phi[k])
        rec_h[k] = phi_r * vals[0]
        rec_f[k] = vals[1:]
    recovered = Trajectory(traj.times, rec_h, rec_f, singular_time=traj.singular_time, steps=traj.steps)
    return replace(traj, phi=phi, recovered=recovered)


@dataclass(frozen=True)
class FlowResidual:
    times: np.ndarray
    h: np.ndarray  # (K-2,)
    f: np.ndarray  # (K-2, n)

    @property
    def total(self):
        return np.maximum(self.h, np.max(self.f, axis=1))

    @property
    def max(self):
        return float(np.max(self.total))


def flow_rhs(h, f, space, dr):
    """(h_t, f_t) demanded by the reduced Ricci flow at one time."""
    hr = stencils.d1(h, dr)
    fr = stencils.d1(f, dr)
    frr = stencils.d2(f, dr)
    zeta, ric, _ = ricci_from_derivatives(space, h, hr, f, fr, frr)
    return -zeta / h, -ric / f


def ricci_flow_residual(traj: Trajectory, space) -> FlowResidual:
    """Max-norm residual of the reduced Ricci flow over interior nodes, per interior time."""
    if len(traj) < 3:
        raise ValueError("need at least three stored times")
    dr = 1.0 / traj.N
    ht = time_derivative(traj.times, traj.h)
    ft = time_derivative(traj.times, traj.f)
    res_h, res_f = [], []
    for k in range(1, len(traj) - 1):
        rh, rf = flow_rhs(traj.h[k], traj.f[k], space, dr)
        res_h.append(np.max(np.abs(ht[k - 1] - rh)[1:-1]))
        res_f.append(np.max(np.abs(ft[k - 1] - rf)[:, 1:-1], axis=1))
    return FlowResidual(traj.times[1:-1], np.array(res_h), np.array(res_f))
