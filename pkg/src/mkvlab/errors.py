"""Exception hierarchy shared by all mkvlab modules."""


class MkvError(Exception):
    """Base class for all mkvlab errors."""


class ShapeError(MkvError):
    """Array dimensions do not match the declared contract."""


class BoundViolation(MkvError):
    """A drift evaluation exceeded its declared sup |sigma^-1 b| bound."""

    def __init__(self, value: float, bound: float, where: str = ""):
        self.value = value
        self.bound = bound
        msg = f"|sigma^-1 b| = {value:.6g} exceeds declared bound {bound:.6g}"
        if where:
            msg += f" ({where})"
        super().__init__(msg)


class NonFinite(MkvError):
    """A simulation produced NaN or infinite state values."""


class SeedCollision(MkvError):
    """Two requested noise streams would overlap."""


class IndexOverflow(MkvError):
    """A stream index exceeds the 32-bit derivation range."""


class EmptyInput(MkvError):
    """An estimator received an empty sample."""


class EdgeMismatch(MkvError):
    """Histogram operands do not share bin edges."""


class GridMismatch(MkvError):
    """A time or value does not lie on the operand's grid."""


class NoConvergence(MkvError):
    """Picard iteration hit max_iter above tolerance.

    Carries the diagnostics accumulated so far in ``diagnostics``.
    """

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics


class InsufficientIterations(MkvError):
    """Contraction fitting needs at least three recorded iterations."""


class InsufficientExceedances(MkvError):
    """Too few rare-event hits to estimate a decay rate."""


class CflViolation(MkvError):
    """Explicit PDE step size violates the stability condition."""


class BoundaryMassError(MkvError):
    """Initial law puts too much mass outside the PDE domain."""


class ConfigError(MkvError):
    """Invalid or unknown run configuration. CLI exit code 2."""


class SchemaViolation(MkvError):
    """A CSV row does not conform to its declared schema."""
