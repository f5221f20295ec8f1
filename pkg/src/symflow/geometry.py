"""Curvature of G-invariant metrics g = h(r)^2 dr^2 + sum_i f_i(r)^2 Q|p_i on [0,1] x G/H.

Everything here acts on nodal samples over the uniform grid r_m = m/N and
uses the fourth-order stencils of :mod:`symflow.stencils`.  The fiber volume
vol(G/H, Q) is normalised to 1 in all integrals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import stencils
from .errors import GridTooCoarse

MIN_CELLS = 8


@dataclass(frozen=True)
class FlowState:
    """Samples of (h, f_1..f_n) at one time ``t``; ``f`` has shape (n, N+1)."""

    h: np.ndarray
    f: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        f = np.array(self.f, dtype=float)
        if f.ndim == 1:
            f = f[None, :]
        if h.ndim != 1 or f.shape[1] != h.size:
            raise ValueError("h must be 1-D and f must have shape (n, len(h))")
        if h.size - 1 < MIN_CELLS:
            raise GridTooCoarse(f"need at least {MIN_CELLS} cells, got {h.size - 1}")
        if np.any(h <= 0) or np.any(f <= 0):
            raise ValueError("h and f_i must be positive at every node")
        h.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "t", float(self.t))

    @property
    def N(self):
        return self.h.size - 1

    @property
    def n(self):
        return self.f.shape[0]

    @property
    def dr(self):
        return 1.0 / self.N

    @property
    def r(self):
        return stencils.grid(self.N)

    @classmethod
    def from_profiles(cls, init, N, t=0.0):
        """Sample :class:`symflow.bcdsl.InitialProfiles` on the grid with N cells."""
        vals = init.sample(stencils.grid(N))
        return cls(vals[0], vals[1:], t)

    @classmethod
    def constant(cls, h, f, N, t=0.0):
        f = np.atleast_1d(np.asarray(f, dtype=float))
        return cls(np.full(N + 1, float(h)), np.repeat(f[:, None], N + 1, axis=1), t)


@dataclass(frozen=True)
class CurvatureField:
    """Ric = zeta dr^2 + sum_i ric_coeff[i] Q|p_i, plus the scalar curvature."""

    zeta: np.ndarray
    ric_coeff: np.ndarray
    scalar: np.ndarray


@dataclass(frozen=True)
class PotentialField:
    """A G-invariant function p(r) sampled on the FlowState grid."""

    p: np.ndarray = field()

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))


def _as_p(p, N):
    arr = p.p if isinstance(p, PotentialField) else np.asarray(p, dtype=float)
    if arr.ndim == 0:
        arr = np.full(N + 1, float(arr))
    if arr.shape != (N + 1,):
        raise ValueError("potential must live on the FlowState grid")
    return arr


def gamma_terms(f, gamma):
    """S_i = sum_{k,l} gamma_{i,k}^l (f_i^4 - 2 f_k^4) / (4 f_k^2 f_l^2), shape (n, N+1)."""
    f2 = f * f
    inv2 = 1.0 / f2
    a = np.einsum("ikl,km,lm->im", gamma, inv2, inv2)
    b = np.einsum("ikl,km,lm->im", gamma, f2, inv2)
    return (f2 * f2 * a - 2.0 * b) / 4.0


def ricci_from_derivatives(space, h, hr, f, fr, frr):
    """Reduced Ricci tensor from nodal values and r-derivatives (any common shape)."""
    d = np.asarray(space.d, float)[:, None]
    beta = np.asarray(space.beta, float)[:, None]
    logf_r = fr / f
    zeta = -np.sum(d * (frr / f - hr * logf_r / h), axis=0)
    mean = np.sum(d * logf_r, axis=0) / h  # sum_k d_k f_kr / (h f_k)
    ric = (beta / 2.0 + gamma_terms(f, space.gamma)
           - f * fr * mean / h
           + fr ** 2 / h ** 2
           - f * frr / h ** 2
           + f * hr * fr / h ** 3)
    scalar = zeta / h ** 2 + np.sum(d * ric / f ** 2, axis=0)
    return zeta, ric, scalar


def ricci(s: FlowState, space) -> CurvatureField:
    """Ricci curvature and scalar curvature of the metric described by ``s``."""
    if s.N < MIN_CELLS:
        raise GridTooCoarse(f"need at least {MIN_CELLS} cells")
    if s.n != space.n:
        raise ValueError("state and space disagree on n")
    dr = s.dr
    hr = stencils.d1(s.h, dr)
    fr = stencils.d1(s.f, dr)
    frr = stencils.d2(s.f, dr)
    zeta, ric, scalar = ricci_from_derivatives(space, s.h, hr, s.f, fr, frr)
    return CurvatureField(zeta, ric, scalar)


@dataclass(frozen=True)
class BoundaryGeometry:
    II_coeff: np.ndarray
    H: float


def boundary_geometry(s: FlowState, space, j: int) -> BoundaryGeometry:
    """Second fundamental form (Q-coefficients) and mean curvature of {j} x G/H.

    The outward normal at r=j points along (-1)^(j+1) d/dr.
    """
    if j not in (0, 1):
        raise ValueError("j must be 0 or 1")
    m = 0 if j == 0 else -1
    fr = stencils.end_d1(s.f, s.dr, j)
    h, f = s.h[m], s.f[:, m]
    sign = (-1.0) ** (j + 1)
    II = sign * f * fr / h
    H = sign * float(np.sum(np.asarray(space.d) * fr / (h * f)))
    return BoundaryGeometry(II, H)


@dataclass(frozen=True)
class VolumeElement:
    w: np.ndarray
    wb: tuple


def volume_element(s: FlowState, space) -> VolumeElement:
    """Interior density w = h prod f_k^{d_k} and boundary densities prod f_k(j)^{d_k}."""
    d = np.asarray(space.d, float)[:, None]
    fib = np.prod(s.f ** d, axis=0)
    return VolumeElement(s.h * fib, (float(fib[0]), float(fib[-1])))


def integrate(values, N):
    """Composite Simpson rule over [0, 1]; requires an even number of cells."""
    if N % 2:
        raise ValueError("Simpson quadrature needs an even number of cells")
    return float(simpson(values, dx=1.0 / N))


def f_functional(s: FlowState, p, space) -> float:
    """Perelman's F = int (R + |grad p|^2) e^{-p} dmu with unit fiber volume."""
    p = _as_p(p, s.N)
    R = ricci(s, space).scalar
    pr = stencils.d1(p, s.dr)
    w = volume_element(s, space).w
    return integrate((R + pr ** 2 / s.h ** 2) * np.exp(-p) * w, s.N)


@dataclass(frozen=True)
class RicciHess:
    rr: np.ndarray
    coeff: np.ndarray
    normsq: np.ndarray


def ricci_plus_hess(s: FlowState, p, space, curv: CurvatureField | None = None) -> RicciHess:
    """Components of Ric + Hess p and its squared norm |Ric + Hess p|^2_g."""
    p = _as_p(p, s.N)
    curv = curv or ricci(s, space)
    dr = s.dr
    hr = stencils.d1(s.h, dr)
    fr = stencils.d1(s.f, dr)
    pr = stencils.d1(p, dr)
    prr = stencils.d2(p, dr)
    h2 = s.h ** 2
    rr = curv.zeta + prr - hr * pr / s.h
    coeff = curv.ric_coeff + s.f * fr * pr / h2
    d = np.asarray(space.d, float)[:, None]
    normsq = (rr / h2) ** 2 + np.sum(d * (coeff / s.f ** 2) ** 2, axis=0)
    return RicciHess(rr, coeff, normsq)
