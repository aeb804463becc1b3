"""Exception taxonomy.

Every failure mode that a caller can reasonably branch on gets its own
class. Anything raised from this package derives from EngineError, so
`except EngineError` separates domain failures from genuine bugs.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all failures raised by this package."""


class PreconditionError(EngineError, ValueError):
    """An operation's stated precondition does not hold for the inputs."""


class SizeBudgetError(EngineError):
    """An intermediate object (projection rows, subset count, recursion
    nodes) exceeded its configured cap."""


class SearchExhaustedError(EngineError):
    """A verified-search operation ran out of grid without finding a
    certified answer (e.g. the rescaling grid)."""


class IllConditionedError(EngineError):
    """A linear system that the theory promises to be near-identity was
    singular at the configured constants."""


class ThresholdAmbiguousError(EngineError):
    """Neither branch of the relabeling dichotomy could be certified at
    the configured constants."""


class InfeasibleProblemError(EngineError):
    """A selection problem admits no solution; carries a minimal
    infeasible subset of the data points when one was identified."""

    def __init__(self, message: str, subset: tuple = ()):  # noqa: ANN001
        super().__init__(message)
        self.subset = tuple(subset)


class MinLevelBreachError(EngineError):
    """Dyadic subdivision hit the configured minimum sidelength; carries
    the offending cube."""

    def __init__(self, message: str, cube=None):  # noqa: ANN001
        super().__init__(message)
        self.cube = cube


class VerificationError(EngineError):
    """A constructed certificate failed its own post-verification; the
    tag names the failing conclusion."""

    def __init__(self, message: str, tag: str = ""):
        super().__init__(message)
        self.tag = tag
