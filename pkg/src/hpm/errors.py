"""Exception types raised across the package."""


class HPMError(Exception):
    """Base class for all package errors."""


class InvalidInputError(HPMError, ValueError):
    """Argument shapes or values are inconsistent."""


class InvalidParameterError(HPMError, ValueError):
    """A model or solver parameter lies outside its admissible range."""


class UnsupportedOrderError(HPMError, ValueError):
    """Requested derivative order exceeds what the kernel supports."""


class UnsupportedModelError(HPMError, ValueError):
    """Unknown PDE family."""


class AssemblyDegenerateError(HPMError, ArithmeticError):
    """Covariance matrix could not be factorized even at the jitter cap."""


class TrainingFailedError(HPMError, RuntimeError):
    """Every optimizer restart failed.

    ``diagnostics`` holds one record per restart.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


class UnstableSolveError(HPMError, RuntimeError):
    """Time step violates the solver's stability limit."""


class InvalidConfigError(HPMError, ValueError):
    """Experiment configuration is malformed or inconsistent."""
