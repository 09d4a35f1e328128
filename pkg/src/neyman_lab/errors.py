"""Exception types raised by the library."""


class NeymanLabError(Exception):
    """Base class for all library errors."""


class NotPositiveDefinite(NeymanLabError):
    pass


class BracketFailure(NeymanLabError):
    pass


class DomainError(NeymanLabError, ValueError):
    pass


class DimensionMismatch(NeymanLabError, ValueError):
    pass


class LengthMismatch(NeymanLabError, ValueError):
    pass


class OutOfOrder(NeymanLabError):
    """``record_outcome`` called without a matching ``step``."""


class RankDeficient(NeymanLabError):
    """The stacked covariate matrix does not have full column rank."""


class DegenerateResiduals(NeymanLabError):
    pass


class TOdd(NeymanLabError, ValueError):
    pass


class ParseError(NeymanLabError, ValueError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigError(NeymanLabError, ValueError):
    pass
