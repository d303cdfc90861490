"""Exception hierarchy shared by all fidlens modules."""


class FidlensError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionError(FidlensError, ValueError):
    """An argument violates a documented precondition (shape, count, range)."""


class InsufficientSamplesError(PreconditionError):
    """Fewer samples than the operation can work with."""


class InvalidDataError(FidlensError, ValueError):
    """Input contains non-finite or otherwise unusable values."""


class NotPSDError(FidlensError, ValueError):
    """A matrix that must be positive semidefinite has a genuinely negative eigenvalue."""

    def __init__(self, message: str, eigenvalue: float | None = None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class SingularMatrixError(FidlensError, ValueError):
    """A matrix is singular beyond what the configured regularization can absorb."""

    def __init__(self, message: str, eigenvalue: float | None = None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class DivergenceError(FidlensError, RuntimeError):
    """An iterative optimization produced a non-finite objective or gradient."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class ShortfallError(FidlensError, RuntimeError):
    """Histogram matching ran out of candidates for one or more classes.

    ``deficits`` maps class index -> number of missing samples.
    """

    def __init__(self, message: str, deficits: dict[int, int]):
        super().__init__(message)
        self.deficits = deficits


class FormatError(FidlensError, ValueError):
    """A binary file does not conform to the expected byte layout."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class ValidationError(FidlensError, ValueError):
    """A file parsed correctly but violates a content invariant."""

    def __init__(self, message: str, block: str | None = None):
        super().__init__(message)
        self.block = block


class UnsupportedError(FidlensError, ValueError):
    """The requested computation has no closed form for this input."""


class UndefinedCorrelationError(FidlensError, ValueError):
    """Correlation of a zero-variance series is undefined."""
