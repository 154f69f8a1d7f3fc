"""Exception types raised by fastmc."""


class FastMCError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(FastMCError, ValueError):
    pass


class NonFinite(FastMCError, FloatingPointError):
    """NaN or Inf showed up in an input or during an iteration."""


class RankDeficient(FastMCError, ArithmeticError):
    """A triangular factor has a (numerically) vanishing diagonal entry.

    ``index`` is the position of the first offending diagonal entry, or
    ``None`` when the rank defect was detected some other way.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SingularTriangular(FastMCError, ArithmeticError):
    pass


class SingularMatrix(FastMCError, ArithmeticError):
    pass


class NoConvergence(FastMCError, ArithmeticError):
    pass


class LengthNotPowerOfTwo(FastMCError, ValueError):
    pass


class NotOrthonormal(FastMCError, ValueError):
    pass


class PreconditionViolated(FastMCError, ValueError):
    pass


class IncoherenceUnreachable(FastMCError, RuntimeError):
    pass


class FormatError(FastMCError, ValueError):
    """Malformed ``dmat v1`` / ``omega v1`` text."""


class InsufficientSamples(UserWarning):
    """A partition left more than half of the columns (or rows) unobserved."""


class InitRankDeficient(UserWarning):
    """The clipped initial factor lost rank and was completed at random."""
