"""Exception types shared across the package.

Every failure mode that callers are expected to catch has its own class so
that tests and the CLI can map failures to behavior (resample, exit code,
...) without string matching.
"""


class QptError(Exception):
    """Base class for all package-specific errors."""


class NonHermitian(QptError):
    """Matrix expected to be Hermitian is not, beyond tolerance."""


class NoConvergence(QptError):
    """An iterative routine hit its iteration cap."""


class NotPSD(QptError):
    """Matrix has an eigenvalue below the PSD tolerance."""


class RankDeficient(QptError):
    """A marginal/operator that must be full rank is numerically singular.

    For walker samples this signals a measure-zero degenerate sample; the
    caller must reject the sample and draw a new one.
    """


class DimensionMismatch(QptError):
    """Operands have incompatible shapes for the requested operation."""


class NotState(QptError):
    """Operand is not a density matrix (PSD, unit trace) within tolerance."""


class NotUnitary(QptError):
    """Operand is not unitary within tolerance."""


class BadParameter(QptError):
    """Scalar parameter outside its documented domain."""


class BadPOVM(QptError):
    """Effects do not form a POVM (completeness violated or negative)."""


class Unsupported(QptError):
    """Requested kind/mode combination is not provided."""


class TooFewSamples(QptError):
    """Not enough samples for a statistically meaningful estimate."""


class TuningFailed(QptError):
    """Step-size tuning could not reach a workable acceptance rate."""


class InsufficientBins(QptError):
    """Histogram has too few usable bins for the requested fit."""


class DegenerateFit(QptError):
    """Fit parameters violate integrability (a2 <= 0) or the error-bar
    formulas' domain."""


class TargetUnreachable(QptError):
    """Tail target lies outside the fitted density's support."""


class SolverFailure(QptError):
    """Conic solve did not reach the requested accuracy."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
