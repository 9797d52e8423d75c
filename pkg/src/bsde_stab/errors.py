"""Exceptions raised by the numerical routines."""


class NumericalFailure(RuntimeError):
    """Base class for failures of an inner numerical method."""


class ImplicitSolveFailure(NumericalFailure):
    """The per-node implicit equation could not be solved."""


class RootBracketFailure(NumericalFailure):
    """A sign change could not be bracketed for a region boundary."""
