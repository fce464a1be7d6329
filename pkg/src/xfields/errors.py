"""Exception hierarchy shared by all xfields modules."""


class XFieldsError(Exception):
    """Base class for every error raised by the package."""


class InvalidExtent(XFieldsError):
    """Domain extents are not strictly ordered."""


class ResolutionTooSmall(XFieldsError):
    """Fewer than 8 grid points along an axis."""


class NonPowerOfTwo(XFieldsError):
    """Periodic grids need power-of-two sizes."""


class ZeroField(XFieldsError):
    """The electric field vector vanishes."""


class GridMismatch(XFieldsError):
    """Two objects live on different grids."""


class BackendUnsupported(XFieldsError):
    """Operation not available for this discretization backend."""


class InvalidParameter(XFieldsError, ValueError):
    """A numeric parameter is outside its admissible range."""


class NonMonotoneBridge(XFieldsError):
    """The interpolating bridge of the weight function is not increasing."""


class DomainTooSmall(XFieldsError):
    """The y-extent cannot hold the requested oscillator mode."""


class QuadratureFailure(XFieldsError):
    """Adaptive quadrature did not reach the requested tolerance."""


class NearSingularTime(XFieldsError):
    """sin(t) is too close to zero for the kernel prefactor."""


class AliasedPhase(XFieldsError):
    """The quadratic kernel phase is under-resolved by the grid."""


class StepTooLarge(XFieldsError):
    """Time-stepping oracle called with too few steps."""


class Inconclusive(XFieldsError):
    """No kernel variant reproduces the oracle to 5%."""


class TailTooLong(XFieldsError):
    """Resolvent time integral would exceed its time budget."""


class SingularSystem(XFieldsError):
    """Resolvent requested on the real axis."""


class ConvergenceFailure(XFieldsError):
    """Iterative solver did not converge."""


class BudgetExceeded(XFieldsError):
    """Power iteration hit its iteration cap before converging."""


class MissingConstants(XFieldsError):
    """A measured constant needed downstream is absent."""


class NotAnEigenpair(XFieldsError):
    """Residual of the supplied eigenpair is too large."""


class ApproximationDegreeExceeded(XFieldsError):
    """Chebyshev approximation needs more terms than allowed."""


class TruncationTail(XFieldsError):
    """Hermite expansion truncated with a non-negligible tail."""


class EmptyRecord(XFieldsError):
    """A record without rows was passed to the plotter."""


class ParseError(XFieldsError):
    """Malformed configuration text."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = "" if line is None else f" (line {line}, column {column})"
        super().__init__(message + where)


class ValidationError(XFieldsError, ValueError):
    """Configuration value is outside its allowed range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
