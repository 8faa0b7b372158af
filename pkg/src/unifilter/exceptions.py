"""Exception hierarchy shared by all modules."""

import numpy as np


class FilterError(Exception):
    """Base class for every error raised by :mod:`unifilter`.

    ``step`` is filled in by :func:`unifilter.unified.run_filter` with the
    index of the time step that failed.
    """

    step = None


class DimensionMismatch(FilterError, ValueError):
    pass


class NotPositiveSemiDefinite(FilterError, np.linalg.LinAlgError):
    pass


class FactorizationFailed(FilterError, np.linalg.LinAlgError):
    pass


class SingularDensity(FactorizationFailed):
    pass


class SingularInnovation(FactorizationFailed):
    pass


class SingularPrediction(FactorizationFailed):
    pass


class SingularCovariance(FactorizationFailed):
    pass


class JacobianUnavailable(FilterError):
    pass


class NonFiniteOutput(FilterError, FloatingPointError):
    pass


class DivergedNonFinite(NonFiniteOutput):
    pass


class PointRequiresAnalytical(FilterError, TypeError):
    pass


class UnknownFilterName(FilterError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class AtSensorSingularity(FilterError, ValueError):
    pass


class ConfigError(FilterError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class MissingResults(FilterError, FileNotFoundError):
    pass
