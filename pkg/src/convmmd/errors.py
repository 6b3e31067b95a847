"""Structured exceptions shared across the package."""


class ConvMmdError(ValueError):
    """Base class for all structured errors raised by convmmd."""


class DimensionMismatchError(ConvMmdError):
    pass


class InvalidBandwidthError(ConvMmdError):
    pass


class DegenerateDataError(ConvMmdError):
    pass


class UnsupportedFamilyError(ConvMmdError):
    pass


class SeparationError(ConvMmdError):
    """Logistic MLE failed to converge (complete separation or degenerate labels)."""


class CurvatureNotInvertibleError(ConvMmdError):
    def __init__(self, message, condition_number=None):
        super().__init__(message)
        self.condition_number = condition_number


class NonFiniteParameterError(ConvMmdError):
    """SGD produced a non-finite parameter vector."""

    def __init__(self, message, last_theta=None, iteration=None):
        super().__init__(message)
        self.last_theta = last_theta
        self.iteration = iteration


class ConfigError(ConvMmdError):
    pass
