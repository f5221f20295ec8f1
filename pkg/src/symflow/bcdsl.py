"""A small expression language for boundary maps and initial profiles.

Expressions are built from numbers, the constant ``pi``, the variables
``r``, ``t``, ``u1`` ... ``un``, the operators ``+ - * / ^`` (``**`` is
accepted for ``^``) and the functions ``sin cos exp log sqrt``.  Trees are
immutable; they can be printed, evaluated (scalars or numpy arrays) and
differentiated symbolically.

>>> e = parse_expr("0.5*u1 + sin(t)")
>>> str(e)
'0.5*u1+sin(t)'
>>> eval_expr(differentiate(parse_expr("r^2"), "r"), {"r": 1.0})
2.0
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    ExprSyntaxError,
    UnboundVariable,
    UnknownIdentifier,
)

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
NAMED_CONSTANTS = {"pi": math.pi}

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


# ---------------------------------------------------------------------------
# tree

class Expr:
    """Base class of expression nodes."""

    __slots__ = ()

    prec = _PREC_ATOM

    def __str__(self):
        return to_source(self)

    def free_variables(self) -> frozenset:
        return frozenset()


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float
    text: str = ""

    @property
    def prec(self):
        return _PREC_NEG if self.value < 0 and not self.text else _PREC_ATOM

    def __eq__(self, other):
        return isinstance(other, Const) and self.value == other.value

    def __hash__(self):
        return hash(("const", self.value))


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def free_variables(self):
        return frozenset((self.name,))


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr
    prec = _PREC_NEG

    def free_variables(self):
        return self.arg.free_variables()


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr

    @property
    def prec(self):
        return _PREC_ADD if self.op in "+-" else _PREC_MUL

    def free_variables(self):
        return self.left.free_variables() | self.right.free_variables()


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr
    prec = _PREC_POW

    def free_variables(self):
        return self.base.free_variables() | self.exponent.free_variables()


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr

    def free_variables(self):
        return self.arg.free_variables()


# ---------------------------------------------------------------------------
# printing

def _fmt_const(c: Const) -> str:
    if c.text:
        return c.text
    v = c.value
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_source(e: Expr) -> str:
    """Render ``e`` with the minimal parentheses needed to re-parse to the same tree."""
    if isinstance(e, Const):
        return _fmt_const(e)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_source(e.arg)})"
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        if e.arg.prec < _PREC_NEG:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        base = to_source(e.base)
        if e.base.prec <= _PREC_POW:
            base = f"({base})"
        exp = to_source(e.exponent)
        if e.exponent.prec < _PREC_NEG:
            exp = f"({exp})"
        return f"{base}^{exp}"
    if isinstance(e, BinOp):
        left, right = to_source(e.left), to_source(e.right)
        if e.left.prec < e.prec:
            left = f"({left})"
        if e.right.prec <= e.prec:
            right = f"({right})"
        return f"{left}{e.op}{right}"
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<pow>\*\*|\^)
  | (?P<op>[-+*/(),])
    """,
    re.VERBOSE,
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", byte_pos)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            tokens.append((kind if kind != "op" else text, text, byte_pos))
        byte_pos += len(text.encode("utf-8"))
        pos = m.end()
    tokens.append(("end", "", byte_pos))
    return tokens


def _allowed_name(name: str, variables) -> bool:
    if variables is not None:
        return name in variables
    return name in ("r", "t") or re.fullmatch(r"u[1-9]\d*", name) is not None


class _Parser:
    def __init__(self, src, variables):
        self.tokens = _tokenize(src)
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind=None):
        tok = self.tokens[self.i]
        if kind is not None and tok[0] != kind:
            what = tok[1] or "end of input"
            raise ExprSyntaxError(f"expected {kind!r}, found {what!r}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", tok[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        kind = self.peek()[0]
        if kind == "-":
            self.take()
            return Neg(self.unary())
        if kind == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "pow":
            self.take()
            return Pow(base, self.unary())
        return base

    def atom(self):
        kind, text, off = self.peek()
        if kind == "num":
            self.take()
            return Const(float(text), text)
        if kind == "ident":
            self.take()
            if text in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Call(text, arg)
            if text in NAMED_CONSTANTS:
                return Const(NAMED_CONSTANTS[text], text)
            if not _allowed_name(text, self.variables):
                raise UnknownIdentifier(text, off)
            return Var(text)
        if kind == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        what = text or "end of input"
        raise ExprSyntaxError(f"unexpected {what!r}", off)


def parse_expr(src: str, n: int | None = None, variables: Sequence[str] | None = None) -> Expr:
    """Parse ``src`` into an expression tree.

    Parameters
    ----------
    src : str
        Expression source.
    n : int, optional
        Number of isotropy summands; restricts ``u<k>`` to ``k <= n``.
    variables : sequence of str, optional
        Explicit whitelist of variable names (overrides ``n``).

    Raises
    ------
    ExprSyntaxError
        With the byte offset of the offending token.
    UnknownIdentifier
        For names outside the permitted set.
    """
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError("empty expression", 0)
    if variables is None and n is not None:
        variables = ("r", "t") + tuple(f"u{k}" for k in range(1, n + 1))
    return _Parser(src, None if variables is None else frozenset(variables)).parse()


def as_expr(e, **kw) -> Expr:
    return e if isinstance(e, Expr) else parse_expr(str(e), **kw)


# ---------------------------------------------------------------------------
# evaluation

def _check(cond, message):
    if np.any(cond):
        raise DomainError(message)


def _div(a, b):
    _check(np.asarray(b) == 0, "division by zero")
    return a / b


def _log(x):
    _check(np.asarray(x) <= 0, "log of a non-positive number")
    return np.log(x)


def _sqrt(x):
    _check(np.asarray(x) < 0, "sqrt of a negative number")
    return np.sqrt(x)


def _pow(a, b):
    a_arr, b_arr = np.asarray(a), np.asarray(b)
    _check((a_arr < 0) & (b_arr != np.round(b_arr)), "fractional power of a negative number")
    _check((a_arr == 0) & (b_arr < 0), "zero raised to a negative power")
    return np.power(a_arr.astype(float), b_arr)


_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": _log, "sqrt": _sqrt}
_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
}


def compile_expr(e: Expr) -> Callable[[Mapping[str, object]], object]:
    """Turn a tree into a closure ``f(bindings)``; works elementwise on arrays."""
    if isinstance(e, Const):
        v = e.value
        return lambda env: v
    if isinstance(e, Var):
        name = e.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariable(f"variable {name!r} is not bound") from None

        return var
    if isinstance(e, Neg):
        f = compile_expr(e.arg)
        return lambda env: -f(env)
    if isinstance(e, BinOp):
        fl, fr, op = compile_expr(e.left), compile_expr(e.right), _BINOPS[e.op]
        return lambda env: op(fl(env), fr(env))
    if isinstance(e, Pow):
        fb, fe = compile_expr(e.base), compile_expr(e.exponent)
        return lambda env: _pow(fb(env), fe(env))
    if isinstance(e, Call):
        fa, fn = compile_expr(e.arg), _FUNCS[e.fn]
        return lambda env: fn(fa(env))
    raise TypeError(f"not an expression node: {e!r}")


def eval_expr(e: Expr, bindings: Mapping[str, object]):
    """Evaluate ``e``; scalar bindings give a float, array bindings an array."""
    with np.errstate(all="ignore"):
        out = compile_expr(e)(bindings)
    if np.ndim(out) == 0:
        out = float(out)
        if not math.isfinite(out):
            raise DomainError("non-finite result")
    elif not np.all(np.isfinite(out)):
        raise DomainError("non-finite result")
    return out


# ---------------------------------------------------------------------------
# differentiation (with light constant folding so trees stay small)

ZERO, ONE = Const(0.0), Const(1.0)


def _is(e, v):
    return isinstance(e, Const) and e.value == v


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def _neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def _div_e(a, b):
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return BinOp("/", a, b)


def _pow_e(a, b):
    if _is(b, 0):
        return ONE
    if _is(b, 1):
        return a
    return Pow(a, b)


def differentiate(e: Expr, var: str) -> Expr:
    """Exact symbolic derivative of ``e`` with respect to ``var``."""
    if var not in e.free_variables():
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg, var))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = differentiate(a, var), differentiate(b, var)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        # quotient rule
        return _div_e(_sub(_mul(da, b), _mul(a, db)), _pow_e(b, Const(2.0)))
    if isinstance(e, Pow):
        a, b = e.base, e.exponent
        da = differentiate(a, var)
        if var not in b.free_variables():
            return _mul(_mul(b, _pow_e(a, _sub(b, ONE))), da)
        db = differentiate(b, var)
        # d(a^b) = a^b (b' log a + b a'/a)
        return _mul(e, _add(_mul(db, Call("log", a)), _div_e(_mul(b, da), a)))
    if isinstance(e, Call):
        a = e.arg
        da = differentiate(a, var)
        if e.fn == "sin":
            inner = Call("cos", a)
        elif e.fn == "cos":
            inner = _neg(Call("sin", a))
        elif e.fn == "exp":
            inner = e
        elif e.fn == "log":
            return _div_e(da, a)
        else:  # sqrt
            return _div_e(da, _mul(Const(2.0), e))
        return _mul(inner, da)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# boundary maps and initial profiles

@dataclass(frozen=True)
class BCSpec:
    """Boundary maps ``exprs[j][i]`` = F_{j,i}(t, u1..un) for the two ends j=0,1."""

    exprs: tuple

    def __post_init__(self):
        exprs = tuple(tuple(as_expr(e) for e in row) for row in self.exprs)
        if len(exprs) != 2 or len(exprs[0]) != len(exprs[1]) or not exprs[0]:
            raise ValueError("BCSpec needs exactly two rows of n expressions")
        n = len(exprs[0])
        allowed = {"t"} | {f"u{k}" for k in range(1, n + 1)}
        for row in exprs:
            for e in row:
                extra = e.free_variables() - allowed
                if extra:
                    raise UnknownIdentifier(sorted(extra)[0])
        object.__setattr__(self, "exprs", exprs)
        object.__setattr__(self, "_compiled", tuple(tuple(compile_expr(e) for e in row) for row in exprs))
        constant = None
        if all(not e.free_variables() for row in exprs for e in row):
            constant = np.array([[e.value for e in row] for row in exprs])
        object.__setattr__(self, "_constant", constant)

    @property
    def n(self):
        return len(self.exprs[0])

    @classmethod
    def parse(cls, rows, n):
        return cls(tuple(tuple(parse_expr(s, variables=("t",) + tuple(f"u{k}" for k in range(1, n + 1)))
                               for s in row) for row in rows))

    @classmethod
    def totally_geodesic(cls, n):
        return cls(((ZERO,) * n, (ZERO,) * n))

    @classmethod
    def shen(cls, lam, n):
        """F_{j,i}(t,u) = lam(t) * u_i, the umbilic family II = lam * g."""
        lam = as_expr(lam, variables=("t",))
        row = tuple(_mul(lam, Var(f"u{i}")) for i in range(1, n + 1))
        return cls((row, row))

    def evaluate(self, j: int, t: float, u) -> np.ndarray:
        """Return (F_{j,1}, ..., F_{j,n}) at time ``t`` and boundary values ``u``."""
        if self._constant is not None:
            return self._constant[j]
        env = {"t": t}
        env.update({f"u{k}": float(u[k - 1]) for k in range(1, self.n + 1)})
        with np.errstate(all="ignore"):
            out = np.array([float(f(env)) for f in self._compiled[j]])
        if not np.all(np.isfinite(out)):
            raise DomainError(f"boundary map at j={j} is not finite at t={t}")
        return out


@dataclass(frozen=True)
class InitialProfiles:
    """Initial data h^(r), f^_i(r) as expressions in ``r``."""

    h: Expr
    f: tuple

    def __post_init__(self):
        h = as_expr(self.h, variables=("r",))
        f = tuple(as_expr(e, variables=("r",)) for e in self.f)
        if not f:
            raise ValueError("need at least one fiber profile")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "f", f)

    @property
    def n(self):
        return len(self.f)

    def exprs(self, order=0):
        """Return (h, f_1..f_n) differentiated ``order`` times in r."""
        out = (self.h,) + self.f
        for _ in range(order):
            out = tuple(differentiate(e, "r") for e in out)
        return out

    def sample(self, r, order=0) -> np.ndarray:
        """Array of shape (n+1, len(r)); row 0 is h, rows 1.. are f_i."""
        r = np.asarray(r, dtype=float)
        return np.array([np.broadcast_to(eval_expr(e, {"r": r}), r.shape) for e in self.exprs(order)])

    def gauge_coefficient(self, d) -> Expr:
        """A(r) = -h^_r/h^^2 + sum_k d_k f^_kr/(h^ f^_k), used by the gauge-fixed system."""
        h, hr = self.h, differentiate(self.h, "r")
        out = _neg(_div_e(hr, _pow_e(h, Const(2.0))))
        for dk, fk in zip(d, self.f):
            term = _div_e(_mul(Const(float(dk)), differentiate(fk, "r")), _mul(h, fk))
            out = _add(out, term)
        return out


def check_compatibility(bc: BCSpec, init: InitialProfiles, space) -> np.ndarray:
    """Zeroth-order compatibility residuals of the boundary map and initial data.

    ``residual[j, i] = f^_ir(j) - (-1)^(j+1) h^(j) F_{j,i}(0, f^(j)^2) / f^_i(j)``.
    The data are compatible iff every entry is below 1e-10 in magnitude.
    """
    if bc.n != init.n or bc.n != space.n:
        raise ValueError("BCSpec, initial profiles and space disagree on n")
    res = np.empty((2, bc.n))
    ends = np.array([0.0, 1.0])
    vals = init.sample(ends)
    ders = init.sample(ends, order=1)
    for j in (0, 1):
        h, f = vals[0, j], vals[1:, j]
        if h <= 0 or np.any(f <= 0):
            raise DomainError("initial profiles must be positive at the boundary")
        F = bc.evaluate(j, 0.0, f ** 2)
        res[j] = ders[1:, j] - (-1) ** (j + 1) * h * F / f
    return res
