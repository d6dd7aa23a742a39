"""Exception hierarchy.

Everything a caller can fix by changing its input derives from
:class:`DataError`; the CLI maps those to exit code 2.
"""


class DataError(ValueError):
    """Base class for user/input errors."""


class SchemaError(DataError):
    """A required column is missing or unparseable."""


class ValidationError(DataError):
    """The data violate a dataset invariant (duplicate keys, treatment reversal, ...)."""

    def __init__(self, message, unit=None):
        super().__init__(message)
        self.unit = unit


class DesignError(DataError):
    """The requested design does not match the data (e.g. heterogeneous onsets in basic mode)."""


class EmptyCellError(DataError):
    """A (group, period) cell required by an estimator has no observations."""

    def __init__(self, group, time):
        super().__init__(f"empty cell: group={group!r}, time={time!r}")
        self.group = group
        self.time = time


class DomainError(DataError):
    """An argument is outside the estimator's domain (order too large, period misuse, ...)."""


class NoCleanControlError(DomainError):
    """No not-yet-treated comparison units exist for a staggered-adoption period."""


class PreconditionError(DataError):
    """A regression-equivalence result's conditions are not met by the data."""


class RankDeficiencyError(DataError):
    """The regression design matrix is not of full column rank."""

    def __init__(self, collinear):
        super().__init__("design matrix is rank deficient; collinear terms: " + ", ".join(collinear))
        self.collinear = list(collinear)


class DegenerateWeightError(DataError):
    """1'W1 is (numerically) zero, so the GMM minimizer is not unique."""


class NearSingularError(DataError):
    """A covariance matrix is not safely invertible."""

    def __init__(self, message, smallest_eigenvalue):
        super().__init__(message)
        self.smallest_eigenvalue = smallest_eigenvalue


class UnstableResamplingError(DataError):
    """Too many bootstrap replicates hit empty cells."""
