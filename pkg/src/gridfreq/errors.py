"""Exception hierarchy shared across the package."""


class GridFreqError(Exception):
    """Base class for all gridfreq errors."""


class ValidationError(GridFreqError):
    """Structurally invalid input: bad network, config, or document."""


class NumericalError(GridFreqError):
    """A numerical procedure failed (unstable matrix, non-convergence, ...)."""


class SimulationDiverged(NumericalError):
    """Time integration produced non-finite values.

    Carries the last finite time and state so callers can inspect how far
    the run got before blowing up.
    """

    def __init__(self, message, time, state):
        super().__init__(message)
        self.time = time
        self.state = state
