"""Exception hierarchy shared by all shellhier modules."""


class ShellhierError(Exception):
    """Base class for all package errors."""


class BadDescriptor(ShellhierError):
    """Unknown surface family or invalid descriptor contents."""


class DegenerateChart(ShellhierError):
    """Chart fails the immersion check at one or more grid nodes."""


class OutOfDomain(ShellhierError):
    """Requested parameter point lies outside the chart rectangle."""


class DegenerateImage(ShellhierError):
    """Deformed tangent vectors are (numerically) linearly dependent."""


class OrderTooHigh(ShellhierError):
    """Requested expansion order exceeds what the hierarchy can produce."""


class InconclusiveFit(ShellhierError):
    """Log-log power fit residual too large to trust the exponent."""


class SolverFailure(ShellhierError):
    """Eigenvalue or least-squares solver did not converge."""


class NotAnIsometry(ShellhierError):
    """Input violates the (infinitesimal) isometry precondition."""


class NotAPlate(ShellhierError):
    """Operation defined only for flat charts."""


class TubularViolation(ShellhierError):
    """Shell thickness exceeds the focal distance of the mid-surface."""


class NegativeAlpha(ShellhierError):
    """Force scaling exponent must be nonnegative."""


class OutOfRegime(ShellhierError):
    """Energy scaling exponent outside the hierarchy range (must be > 2)."""


class ConstraintViolated(ShellhierError):
    """Recovery-sequence input does not satisfy the regime's constraint."""


class NewtonDiverged(SolverFailure):
    """Newton iteration failed to reach the requested defect tolerance."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class NotElliptic(ShellhierError):
    """Surface fails the uniform ellipticity check."""


class InsufficientOrder(ShellhierError):
    """Displacement hierarchy is not an isometry of the required order."""


class FitDegenerate(ShellhierError):
    """All energies at machine zero; no exponent can be fitted."""


class DegenerateGradientWarning(UserWarning):
    """det(grad u) <= 0 at a quadrature node; energy is still finite."""
