"""Exception types shared across the package."""


class HorolabError(Exception):
    """Base class for all package errors."""


class NumericOverflowError(HorolabError):
    """A hyperbolic/exponential argument exceeded the double-precision guard."""


class ReductionError(HorolabError):
    """Fundamental-domain reduction failed to converge (non-finite input)."""


class CutoffError(HorolabError):
    """The lattice cutoff R cannot certify a complete Poincare sum."""


class NonAdmissibleError(HorolabError):
    """The time-change generator violates positivity or boundedness."""


class ConvergenceError(HorolabError):
    """An iterative solve (cocycle inversion) did not converge."""


class DegenerateFitError(HorolabError):
    """Fewer than three usable points for a power-law fit."""


class AllBelowNoiseError(HorolabError):
    """Every correlation point sits at the Monte Carlo noise floor.

    This is a first-class outcome (fast decay), reported distinctly from a
    degenerate fit. The offending points travel with the exception.
    """

    def __init__(self, message, points=None):
        super().__init__(message)
        self.points = points or []


class ConfigError(HorolabError):
    """Bad experiment configuration."""
