"""Exception and warning types raised by the ecomp package."""


class EcompError(Exception):
    """Base class for all ecomp errors."""


class InvalidParameterSpace(EcompError, ValueError):
    """Parameters fall outside the ECOMP parameter space.

    ``clause`` names the violated condition so callers (the CLI in
    particular) can report it verbatim.
    """

    def __init__(self, message, clause=None):
        super().__init__(message)
        self.clause = clause


class NonConvergent(EcompError, ArithmeticError):
    """A series did not reach its stopping criterion within ``max_terms``."""


class NoConvergence(EcompError, RuntimeError):
    """Every optimizer start failed during a fit."""


class DataTooSparse(EcompError, ValueError):
    """Too few observations for the number of free parameters."""


class DegenerateCells(EcompError, ValueError):
    """A goodness-of-fit cell has (numerically) zero expected frequency."""


class StateCapExceeded(EcompError, RuntimeError):
    """A simulated queue left the state range even after auto-extension."""


class BimodalRegionWarning(UserWarning):
    """Mode rules do not apply (0 < v < 1); an exhaustive scan was used."""
