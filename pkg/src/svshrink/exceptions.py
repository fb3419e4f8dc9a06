"""Exception types raised by the library."""


class ShrinkageError(Exception):
    """Base class for numerical failures specific to this package."""


class PoleError(ShrinkageError, ValueError):
    """A generalized Pochhammer symbol in a denominator vanishes."""


class SeriesConvergenceError(ShrinkageError):
    """The hypergeometric series did not reach its tolerance.

    Attributes:
        terms_used: highest partition weight that was summed.
        point: optional description of the argument that failed.
    """

    def __init__(self, message, terms_used=None, point=None):
        super().__init__(message)
        self.terms_used = terms_used
        self.point = point


class RankDeficiencyError(ShrinkageError, ValueError):
    """A matrix that must be invertible is (numerically) singular."""


class DegenerateInputError(ShrinkageError, ValueError):
    """Input lies on a set where the requested quantity is undefined."""
