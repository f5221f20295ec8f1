"""Exception hierarchy shared by all symflow modules."""


class SymflowError(Exception):
    """Base class for every error raised by symflow."""


# algebra
class InvalidBracketTable(SymflowError):
    pass


class NonScalarKilling(SymflowError):
    pass


class AllBetaZero(SymflowError):
    pass


class UnknownSpace(SymflowError):
    pass


# expressions
class ExprSyntaxError(SymflowError):
    """Malformed expression source. ``offset`` is a byte offset into the UTF-8 source."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class UnknownIdentifier(SymflowError):
    def __init__(self, name, offset=None):
        super().__init__(f"unknown identifier {name!r}")
        self.name = name
        self.offset = offset


class UnboundVariable(SymflowError):
    pass


class DomainError(SymflowError, ArithmeticError):
    pass


# numerics
class GridTooCoarse(SymflowError, ValueError):
    pass


class PositivityLost(SymflowError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StabilityBound(SymflowError, ValueError):
    pass


def _fmt_residual(val):
    return f"{val:.3f}" if abs(val) >= 1e-3 else f"{val:.3e}"


class IncompatibleData(SymflowError):
    def __init__(self, residuals, tol=1e-10):
        self.residuals = residuals
        self.tol = tol
        rows = "; ".join(
            f"j={j}, i={i + 1}: {_fmt_residual(val)}"
            for j, row in enumerate(residuals)
            for i, val in enumerate(row)
        )
        super().__init__(f"boundary data incompatible with initial profiles at t=0 ({rows})")


class GaugeDegenerate(SymflowError):
    pass


class HypothesisViolated(SymflowError, UserWarning):
    """Boundary data break the fixed-conformal-class / zero-mean-curvature hypotheses."""


class DegenerateFit(SymflowError, ValueError):
    pass


# cli
class ConfigError(SymflowError):
    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class MissingArtifacts(SymflowError, FileNotFoundError):
    pass
