class EismuError(Exception):
    """Base class for library errors."""


class DomainError(EismuError, ValueError):
    pass


class PrecisionError(EismuError, ArithmeticError):
    pass


class PoleError(EismuError, ArithmeticError):
    pass


class InsufficientPrecision(PrecisionError):
    pass


class RankNotOne(EismuError):
    """The residual Eisenstein eigenspace is bigger than expected."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class DegenerateProjector(EismuError):
    pass


class UnsolvableError(EismuError, ValueError):
    pass


class LevelError(EismuError, ValueError):
    pass


class MomentDeficit(EismuError, ValueError):
    pass
