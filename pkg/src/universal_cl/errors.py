"""Exception hierarchy shared across the package."""


class UniversalCLError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(UniversalCLError, ValueError):
    pass


class WeightError(UniversalCLError, ValueError):
    pass


class GammaZeroError(WeightError):
    """All weights are zero, so the normalizer is not positive."""


class InvalidKeyError(UniversalCLError, KeyError):
    """A subset or division is not valid for the model dimension."""


class ParameterError(UniversalCLError, ValueError):
    pass


class ConditioningError(UniversalCLError, ValueError):
    """Conditioning on an event of probability zero."""


class SplitError(UniversalCLError, ValueError):
    pass


class SpaceError(UniversalCLError, ValueError):
    pass


class EvaluationError(UniversalCLError, ArithmeticError):
    pass


class GridError(UniversalCLError, ValueError):
    pass


class ConfigError(UniversalCLError, ValueError):
    pass


class ConvergenceError(UniversalCLError, RuntimeError):
    """Every optimizer restart failed; ``best`` holds the best point seen, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
