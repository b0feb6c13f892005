"""Exception types shared across the package."""


class CompactWaveError(Exception):
    """Base class for all errors raised by this package."""


class MeshMismatchError(CompactWaveError):
    """Two grid functions do not live on the same mesh."""


class SingularOperatorError(CompactWaveError):
    """A sine-diagonal operator has a symbol too close to zero to invert."""


class UnsupportedVariantError(CompactWaveError):
    """A requested assembly variant cannot be evaluated with the given data."""


class RejectedConfigurationError(CompactWaveError):
    """A run configuration fails an admissibility check (e.g. time-step bound)."""


class SolverFailureError(CompactWaveError):
    """An iterative solve did not reach the requested tolerance.

    Carries the partial ``SolveReport`` in ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(CompactWaveError):
    """A run-configuration file violates the schema; message names the field."""
