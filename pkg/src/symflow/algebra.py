"""Structure constants of homogeneous spaces G/H.

A :class:`BracketTable` stores the Lie bracket of a compact Lie algebra in a
basis that is orthonormal for an Ad-invariant scalar product Q, ordered as
(basis of h, basis of p_1, ..., basis of p_n).  :func:`structure_constants`
reduces it to the numbers (d_k, beta_k, gamma_{i,k}^l) that enter the
curvature of cohomogeneity-one metrics.

Catalog normalisation: every catalog entry is built from matrix Lie algebras
with Q(X, Y) = -1/2 Re tr(XY).  For so(k+1) this makes Q restricted to p the
unit round metric on S^k, so beta = 2(k-1) and gamma = 0.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllBetaZero, InvalidBracketTable, NonScalarKilling, UnknownSpace

IDENTITY_TOL = 1e-10
JACOBI_TOL = 1e-12


@dataclass(frozen=True)
class BracketTable:
    """Structure constants ``c[a, b, e]`` with [e_a, e_b] = sum_e c[a, b, e] e_e."""

    dim_g: int
    dim_h: int
    summand_dims: tuple
    c: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "summand_dims", tuple(int(k) for k in self.summand_dims))
        if c.shape != (self.dim_g,) * 3:
            raise InvalidBracketTable(f"structure constants must have shape {(self.dim_g,) * 3}, got {c.shape}")
        if self.dim_h + sum(self.summand_dims) != self.dim_g or min(self.summand_dims, default=0) < 1:
            raise InvalidBracketTable("dim_g must equal dim_h + sum(summand_dims) with positive summands")

    @property
    def n(self):
        return len(self.summand_dims)

    def summand_slices(self):
        """Index slices of p_1, ..., p_n in the basis."""
        out, start = [], self.dim_h
        for dk in self.summand_dims:
            out.append(slice(start, start + dk))
            start += dk
        return out

    def check(self, tol=JACOBI_TOL):
        """Raise InvalidBracketTable unless antisymmetry, ad-invariance and Jacobi hold."""
        c = self.c
        if np.max(np.abs(c + c.transpose(1, 0, 2)), initial=0.0) > tol:
            raise InvalidBracketTable("bracket is not antisymmetric")
        # Q([e_a, e_b], e_e) = c[a,b,e] must be totally antisymmetric
        if np.max(np.abs(c + c.transpose(0, 2, 1)), initial=0.0) > tol:
            raise InvalidBracketTable("Q is not ad-invariant in this basis")
        if jacobi_residual(c) > tol:
            raise InvalidBracketTable("Jacobi identity fails")
        return self

    def to_json(self) -> dict:
        idx = np.argwhere(self.c != 0.0)
        entries = [[int(a), int(b), int(e), float(self.c[a, b, e])] for a, b, e in idx]
        return {
            "dim_g": self.dim_g,
            "dim_h": self.dim_h,
            "summand_dims": list(self.summand_dims),
            "entries": entries,
        }

    @classmethod
    def from_json(cls, obj: dict, label=""):
        dim_g = int(obj["dim_g"])
        c = np.zeros((dim_g,) * 3)
        for a, b, e, val in obj.get("entries", []):
            c[int(a), int(b), int(e)] = float(val)
        return cls(dim_g, int(obj["dim_h"]), tuple(obj["summand_dims"]), c, label=label)

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), label=path.stem)

    def remixed(self, rng) -> "BracketTable":
        """Same algebra in a basis rotated by a random orthogonal matrix inside each p_k."""
        U = np.eye(self.dim_g)
        for sl in self.summand_slices():
            k = sl.stop - sl.start
            q, r = np.linalg.qr(rng.standard_normal((k, k)))
            U[sl, sl] = q * np.sign(np.diag(r))
        # new basis e'_a = sum_b U[b, a] e_b
        c = np.einsum("ia,jb,ijk,kc->abc", U, U, self.c, U)
        return BracketTable(self.dim_g, self.dim_h, self.summand_dims, c, self.label)

    def rescaled(self, scale: float) -> "BracketTable":
        """Table for Q -> scale*Q with the basis rescaled by scale**-0.5."""
        return BracketTable(self.dim_g, self.dim_h, self.summand_dims, self.c / np.sqrt(scale), self.label)


@dataclass(frozen=True)
class HomogeneousSpaceData:
    """The constants (n, d_k, beta_k, gamma_{i,k}^l) of G/H."""

    d: tuple
    beta: tuple
    gamma: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "d", tuple(int(x) for x in self.d))
        object.__setattr__(self, "beta", tuple(float(x) for x in self.beta))
        g = np.array(self.gamma, dtype=float).reshape((len(self.d),) * 3)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        if len(self.beta) != len(self.d):
            raise ValueError("beta and d must have the same length")

    @property
    def n(self):
        return len(self.d)

    @property
    def dim(self):
        """Dimension of M = [0,1] x G/H."""
        return sum(self.d) + 1

    def einstein_constants(self):
        """Ricci coefficients w.r.t. Q of the metric Q itself on G/H (all f_i = 1)."""
        return np.asarray(self.beta) / 2.0 - self.gamma.sum(axis=(1, 2)) / 4.0

    @classmethod
    def sphere2(cls):
        """S^2 = SO(3)/SO(2) with the unit round normalisation."""
        return cls((2,), (2.0,), np.zeros((1, 1, 1)), "sphere(2)")


def jacobi_residual(c: np.ndarray) -> float:
    """max |[[a,b],e] + [[b,e],a] + [[e,a],b]| over basis triples."""
    # [[a,b],e]_f = sum_m c[a,b,m] c[m,e,f]
    t = np.einsum("abm,mef->abef", c, c)
    jac = t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)
    return float(np.max(np.abs(jac), initial=0.0))


def killing_form(c: np.ndarray) -> np.ndarray:
    """P[a, b] = tr(ad e_a ad e_b); (ad e_a)[e, b] = c[a, b, e]."""
    return np.einsum("amk,bkm->ab", c, c)


def structure_constants(table: BracketTable, tol: float = IDENTITY_TOL) -> HomogeneousSpaceData:
    """Compute d_k, beta_k and gamma_{i,k}^l from a bracket table.

    beta_k comes from P = -beta_k Q on p_k, where P is the Killing form;
    gamma_{i,k}^l = (1/d_i) sum Q([e_a, e_b], e_c)^2 over a in p_i, b in p_k,
    c in p_l.

    Raises
    ------
    NonScalarKilling
        If P restricted to some p_k is not a multiple of Q (bad summand split).
    AllBetaZero
        If every beta_k vanishes.
    """
    table.check()
    c = table.c
    P = killing_form(c)
    slices = table.summand_slices()
    beta = []
    for k, sl in enumerate(slices):
        block = P[sl, sl]
        b = -np.trace(block) / block.shape[0]
        if np.max(np.abs(block + b * np.eye(block.shape[0]))) > tol:
            raise NonScalarKilling(f"Killing form is not scalar on summand {k + 1}")
        beta.append(0.0 if abs(b) < tol else b)
    if not any(b > tol for b in beta):
        raise AllBetaZero("every beta_k vanishes; the data are not of compact type")
    n = table.n
    gamma = np.zeros((n, n, n))
    for i, k, l in itertools.product(range(n), repeat=3):
        gamma[i, k, l] = np.sum(c[slices[i], slices[k], slices[l]] ** 2) / table.summand_dims[i]
    return HomogeneousSpaceData(table.summand_dims, tuple(beta), gamma, table.label)


@dataclass
class IdentityReport:
    residuals: dict
    max_residual: float
    positive_beta: bool
    failures: list
    tol: float = IDENTITY_TOL

    @property
    def passed(self):
        return not self.failures

    def __bool__(self):
        return self.passed


def validate_identities(data: HomogeneousSpaceData, tol: float = IDENTITY_TOL) -> IdentityReport:
    """Check d_i g_{ik}^l = d_k g_{ki}^l = d_l g_{li}^k and that some beta_k > 0."""
    d = np.asarray(data.d, float)
    g = data.gamma
    n = data.n
    residuals, failures = {}, []
    for i, k, l in itertools.product(range(n), repeat=3):
        a = d[i] * g[i, k, l]
        r1 = abs(a - d[k] * g[k, i, l])
        r2 = abs(a - d[l] * g[l, i, k])
        residuals[(i, k, l)] = max(r1, r2)
        if max(r1, r2) >= tol:
            failures.append(f"gamma identity fails at (i,k,l)=({i + 1},{k + 1},{l + 1}): residual {max(r1, r2):.3g}")
    if np.any(g < 0):
        failures.append("negative gamma")
    positive = any(b > 0 for b in data.beta)
    if not positive:
        failures.append("no positive beta")
    if sum(data.d) < 2:
        failures.append("dim G/H = sum d_k must be at least 2")
    mx = max(residuals.values(), default=0.0)
    return IdentityReport(residuals, mx, positive, failures, tol)


# ---------------------------------------------------------------------------
# catalog

def _q(X, Y):
    return -0.5 * np.real(np.trace(X @ Y))


def _table_from_matrices(h_basis, summands, label) -> BracketTable:
    """Bracket table from matrix bases that are Q-orthonormal for Q = -1/2 Re tr."""
    basis = list(h_basis) + [X for block in summands for X in block]
    dim = len(basis)
    gram = np.array([[_q(X, Y) for Y in basis] for X in basis])
    if np.max(np.abs(gram - np.eye(dim))) > 1e-12:
        raise AssertionError("catalog basis is not orthonormal")
    c = np.zeros((dim,) * 3)
    for a, b in itertools.product(range(dim), repeat=2):
        br = basis[a] @ basis[b] - basis[b] @ basis[a]
        for e in range(dim):
            c[a, b, e] = _q(br, basis[e])
    c[np.abs(c) < 1e-15] = 0.0
    return BracketTable(dim, len(h_basis), tuple(len(s) for s in summands), c, label).check()


def _so_unit(m, a, b):
    E = np.zeros((m, m))
    E[a, b], E[b, a] = 1.0, -1.0
    return E


def _sphere_table(k: int) -> BracketTable:
    m = k + 1
    h = [_so_unit(m, a, b) for a in range(1, m) for b in range(a + 1, m)]
    p = [_so_unit(m, 0, a) for a in range(1, m)]
    return _table_from_matrices(h, [p], f"sphere({k})")


def _su3_flag_table() -> BracketTable:
    def e(a, b):
        E = np.zeros((3, 3), complex)
        E[a, b] = 1.0
        return E

    h = [1j * (e(0, 0) - e(1, 1)), 1j * (e(0, 0) + e(1, 1) - 2 * e(2, 2)) / np.sqrt(3.0)]
    summands = []
    for a, b in ((0, 1), (0, 2), (1, 2)):
        summands.append([e(a, b) - e(b, a), 1j * (e(a, b) + e(b, a))])
    return _table_from_matrices(h, summands, "su3/t2")


CATALOG_NAMES = ("sphere(2)", "sphere(3)", "sphere(4)", "sphere(5)", "su3/t2")


def catalog_lookup(name: str) -> BracketTable:
    """Bracket table of a cataloged homogeneous space.

    Entries: ``sphere(k)`` = SO(k+1)/SO(k) for k = 2..5 (n = 1, d = [k]) and
    ``su3/t2``, the full flag SU(3)/T^2 (n = 3, d = [2, 2, 2]).  All satisfy
    the inequivalent-irreducible-summand hypothesis (known from the
    representation theory of these spaces; not machine-checked).
    """
    key = name.strip().lower().replace(" ", "")
    m = re.fullmatch(r"sphere\((\d+)\)", key)
    if m and 2 <= int(m.group(1)) <= 5:
        return _sphere_table(int(m.group(1)))
    if key in ("su3/t2", "su(3)/t2", "su(3)/t^2"):
        return _su3_flag_table()
    raise UnknownSpace(f"{name!r} is not in the catalog {CATALOG_NAMES}")


def load_space(spec: str) -> HomogeneousSpaceData:
    """Catalog name or path to a bracket-table JSON file."""
    path = Path(spec)
    if spec.endswith(".json") or path.is_file():
        return structure_constants(BracketTable.load(path))
    return structure_constants(catalog_lookup(spec))
