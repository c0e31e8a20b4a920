"""Exception hierarchy.

Input/configuration problems derive from :class:`InputError`; violations of
the statistical preconditions of an estimator derive from
:class:`PreconditionError`. The CLI maps these to exit codes 2 and 3.
"""


class TdfdrError(Exception):
    """Base class for all package errors."""


class InputError(TdfdrError, ValueError):
    """Malformed data, shapes or configuration."""


class PreconditionError(TdfdrError):
    """The data do not satisfy a statistical precondition."""


class DegenerateVariance(PreconditionError):
    """Both groups have zero sample variance; the t statistic is undefined."""


class DimensionError(InputError):
    pass


class SingularGram(PreconditionError):
    pass


class FactorizationError(PreconditionError):
    pass


class NonFiniteInput(InputError):
    pass


class NoConvergence(TdfdrError):
    pass


class EmptyInput(InputError):
    pass


class NonPositiveBandwidth(InputError):
    pass


class AllZeroWeights(InputError):
    pass


class TooFewPoints(PreconditionError):
    pass


class NoTargets(PreconditionError):
    pass


class TooFewTargets(PreconditionError):
    pass


class TooFewDecoys(PreconditionError):
    pass


class TooFewInClass(PreconditionError):
    pass


class BadScenario(InputError):
    pass


class ConfigError(InputError):
    """Invalid simulation config; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")
