"""Exception types raised by the package."""


class NumericalDegeneracyError(ArithmeticError):
    """A linear-algebra quantity that must be nonzero (or positive) was not."""


class SimulationDivergenceError(RuntimeError):
    """The closed-loop simulation produced a non-finite state.

    Attributes
    ----------
    t : float
        Simulated time at which the divergence was detected.
    state : object
        Last finite state before the failing step.
    """

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state
