"""Exception hierarchy for the lab.

Every raisable condition named by the module contracts gets its own class so
callers can catch precisely; the CLI maps them onto exit codes.
"""


class CltLabError(Exception):
    """Base class for all package errors."""


class NotPsd(CltLabError):
    """Matrix failed the positive-semidefinite tolerance."""


class DimMismatch(CltLabError):
    pass


class SizeMismatch(CltLabError):
    pass


class InsufficientSamples(CltLabError):
    pass


class BadProfileParams(CltLabError):
    pass


class Reducible(CltLabError):
    """Kernel is not irreducible; stationary quantities undefined."""


class NoOverlap(CltLabError):
    """Minorization mass is zero for the chosen small set and skeleton step."""


class TooFewCycles(CltLabError):
    pass


class MissingRegens(CltLabError):
    """Simulation horizon too short to contain the required regenerations."""


class TooManySubsets(CltLabError):
    pass


class BadLengths(CltLabError):
    pass


class LengthMismatch(CltLabError):
    pass


class BadParams(CltLabError):
    pass


class BadSetting(CltLabError):
    pass


class DomainError(CltLabError):
    pass


class TooFewPoints(CltLabError):
    pass


class NonPositiveEstimates(CltLabError):
    pass


class ConfigError(CltLabError):
    """Experiment configuration failed validation; message names the field."""


class BudgetExceeded(CltLabError):
    """Wall-clock budget ran out before the experiment finished."""


class MissingResults(CltLabError):
    pass
