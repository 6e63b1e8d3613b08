"""Exception types raised by the library."""


class GBRWError(Exception):
    """Base class for all library errors."""


class NonProbability(GBRWError, ValueError):
    pass


class ZeroOffspring(GBRWError, ValueError):
    pass


class NotScheduled(GBRWError, KeyError):
    pass


class GridTooNarrow(GBRWError):
    pass


class GridOverflow(GBRWError):
    pass


class KTooLarge(GBRWError, ValueError):
    pass


class DomainError(GBRWError, ValueError):
    pass


class MissingMode(GBRWError):
    pass


class PopulationCapExceeded(GBRWError):
    pass


class Infeasible(GBRWError):
    """Parameter search exhausted its floors.

    ``constraint`` names the first constraint that could not be met.
    """

    def __init__(self, message, constraint=None, audit=None):
        super().__init__(message)
        self.constraint = constraint
        self.audit = list(audit or [])


class PreconditionError(GBRWError, ValueError):
    pass


class PremiseUnmet(GBRWError):
    pass


class ConfigError(GBRWError, ValueError):
    pass
