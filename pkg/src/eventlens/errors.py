"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` used by the command line driver:
1 for invalid inputs (bad config values, malformed or inconsistent files),
2 for data that is well formed but insufficient for the requested analysis
(coverage shortfalls, missing factors, degenerate samples).
"""


class EventLensError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(EventLensError):
    """Invalid configuration value or unusable parameter combination."""

    exit_code = 1


class ParseError(EventLensError):
    """A file could not be parsed (bad header, malformed date, ...)."""

    exit_code = 1


class ValidationError(EventLensError):
    """Parsed data violates an invariant (non-positive price, ...)."""

    exit_code = 1


class ConflictError(EventLensError):
    """Duplicate keys with conflicting payloads (same date, different rows)."""

    exit_code = 1


class UnknownAssetError(EventLensError):
    """A referenced asset is not present in the panel."""

    exit_code = 1


class DomainError(EventLensError):
    """A numeric argument is outside the function's domain."""

    exit_code = 1


class DataAccessError(EventLensError):
    """A referenced data file could not be opened or read."""

    exit_code = 2


class CoverageError(EventLensError):
    """Not enough usable observations to honour the requested windows."""

    exit_code = 2


class EmptyJoinError(CoverageError):
    """An inner join between dated series produced no rows."""

    exit_code = 2


class MissingFactorError(EventLensError):
    """A benchmark needs factor columns the data does not provide."""

    exit_code = 2


class SampleSizeError(EventLensError):
    """Sample too small for the requested estimator."""

    exit_code = 2


class SingularDesignError(EventLensError):
    """Regression design matrix is rank deficient or near singular."""

    exit_code = 2


class DegenerateVarianceError(EventLensError):
    """A variance estimate needed for inference is exactly zero."""

    exit_code = 2


class DegenerateLabelsError(EventLensError):
    """A binary-outcome fit was asked for but only one class is present."""

    exit_code = 2


class NotPositiveDefiniteError(EventLensError):
    """A covariance matrix is not positive definite even after jitter."""

    exit_code = 2


class NoSupportError(EventLensError):
    """Matching produced no pairs; groups share no common support."""

    exit_code = 2
