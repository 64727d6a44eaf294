"""Exception types shared across the package.

Everything subclasses :class:`HgganError`.  The CLI maps
:class:`ValidationError` subclasses to exit code 2 and
:class:`NumericError` subclasses to exit code 3.
"""


class HgganError(Exception):
    pass


class ValidationError(HgganError, ValueError):
    """Bad input: shapes, ranges, configs, files."""


class NumericError(HgganError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class DimensionError(ValidationError):
    pass


class InvalidHyperedgeError(ValidationError):
    pass


class DegenerateFeatureError(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class CapacityError(ValidationError):
    pass


class InputError(ValidationError):
    pass


class PathError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ManifestError(ValidationError):
    pass


class SplitError(ValidationError):
    pass


class StateError(HgganError, RuntimeError):
    pass


class NumericOverflowError(NumericError):
    pass


class DivergenceError(NumericError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class NoTerminationError(NumericError):
    def __init__(self, message: str, states=()):
        super().__init__(message)
        self.states = list(states)


class SamplingFailureError(NumericError):
    pass
