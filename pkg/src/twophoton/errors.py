"""Exception hierarchy shared by all modules."""


class TwoPhotonError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TwoPhotonError, ValueError):
    """An argument lies outside the domain of a model."""


class DegenerateInputError(DomainError):
    """Inputs make the requested quantity undefined (e.g. all-zero coefficients)."""


class SingularityError(TwoPhotonError, ArithmeticError):
    """A formula is evaluated exactly at a pole (zero information, zero slope)."""


class ResolutionError(TwoPhotonError):
    """A quadrature grid or finite-difference step is too coarse for the request."""


class NormalizationError(TwoPhotonError):
    """A spectral amplitude is not normalized on its integration grid."""


class MatrixError(DomainError):
    """A matrix is not a valid density matrix."""


class ModelError(TwoPhotonError):
    """A fitted model produces invalid probabilities where they are needed."""


class InsufficientDataError(TwoPhotonError):
    """Data do not constrain the requested fit."""


class FitError(TwoPhotonError):
    """A nonlinear fit failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class OutOfRangeError(TwoPhotonError):
    """An estimate landed on the boundary of its search interval."""


class SearchError(TwoPhotonError):
    """An iterative instrument search did not converge."""


class DataError(TwoPhotonError):
    """Measured data violate a structural assumption (e.g. monotonicity)."""


class ConfigError(TwoPhotonError):
    """A run configuration is malformed or inconsistent."""
