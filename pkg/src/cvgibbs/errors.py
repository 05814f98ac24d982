"""Exception types shared across the package.

The command-line runner maps each class to a fixed exit code, so library
code raises these instead of bare ValueError when the failure belongs to
one of the categories below.
"""


class CVGibbsError(Exception):
    """Base class for package errors."""


class DimensionCapError(CVGibbsError):
    """A basis or superoperator would exceed the configured size cap."""


class NumericalError(CVGibbsError):
    """A numerical precondition or post-condition check failed."""


class KMSViolationError(NumericalError):
    """A filter function does not satisfy the KMS condition."""


class SpectralCollisionError(NumericalError):
    """Eigenvalues of two sectors that must stay separated coincide."""


class ConfigError(CVGibbsError):
    """An experiment configuration failed schema validation."""
