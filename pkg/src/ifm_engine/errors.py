"""Exception hierarchy shared by all modules."""


class IFMError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(IFMError, ValueError):
    """Invalid parameters or malformed input."""


class GridTooCoarseError(IFMError):
    """Quadrature on the sample grid disagrees with a refined grid."""


class NonConvergenceError(IFMError):
    """An iterative solver exhausted its iteration budget."""


class InfeasibleGridError(ValidationError):
    """The frequency grid cannot resolve the motional gap."""


class ZeroNormError(IFMError):
    """A conditioned branch carries no probability."""


class PictureMismatchError(ValidationError):
    """State is in the wrong picture for the requested operation."""


class VanishingPostselectionError(IFMError):
    """The post-selection amplitude is below the configured floor."""


class StepSizeInstabilityError(IFMError):
    """Norm drift of a unitary integration exceeded its tolerance."""
