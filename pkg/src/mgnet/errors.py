"""Exception types shared across the package."""


class MgnError(Exception):
    """Base class for all package-specific errors."""


class NonSymmetric(MgnError):
    """Matrix expected to be symmetric is not (beyond tolerance)."""


class NotPositiveDefinite(MgnError):
    """Cholesky pivot fell below the positive-definiteness threshold."""


class NotPSD(MgnError):
    """Symmetric matrix has an eigenvalue below the PSD tolerance."""


class UnknownActivation(MgnError, KeyError):
    """Requested activation family is not in the catalog."""


class DimensionMismatch(MgnError, ValueError):
    """Operand dimensions are incompatible."""


class InvalidSpec(MgnError, ValueError):
    """ModelSpec field fails validation."""


class InvalidModel(MgnError, ValueError):
    """Model state violates a requirement of the requested operation."""


class NoConvergence(MgnError):
    """Iterative routine exhausted its budget without converging."""


class NonFiniteLoss(MgnError):
    """A loss or gradient evaluation produced NaN or infinity."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DegenerateData(MgnError):
    """Sample set is too degenerate to fit (e.g. zero covariance)."""


class UnsupportedFormat(MgnError, ValueError):
    """Image file decoded fine but is not a mode this pipeline accepts."""


class FormatError(MgnError, ValueError):
    """Serialized model/config file is malformed for this reader."""


class ConfigError(MgnError, ValueError):
    """Run configuration is invalid (unknown key, bad value, bad section)."""
