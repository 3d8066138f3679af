"""Exception types shared across modules."""


class ModelError(ValueError):
    """Invalid model parameters or an operation the model does not support."""


class RateDivergenceError(ArithmeticError):
    """The exact time-local rate does not exist at the requested time.

    Raised when the survival amplitude vanishes; ``time`` is the first
    divergence time.
    """

    def __init__(self, time: float, message: str | None = None):
        self.time = float(time)
        super().__init__(message or f"rate diverges at t = {self.time:.10g}")


class QuadratureError(ArithmeticError):
    """Iterated quadrature did not reach its tolerance before the grid cap."""


class NegativeRateError(ValueError):
    """A Lindblad channel saw a negative rate; use the TCL generator instead."""


class PropagationError(ArithmeticError):
    """Deterministic propagation became unstable or hit an invalid generator."""


class TrajectoryAbort(RuntimeError):
    """A stochastic trajectory left its admissible regime.

    Carries the ``(seed, index)`` pair that reproduces it and the number of
    trajectories that completed before the abort was detected.
    """

    def __init__(self, seed: int, index: int, reason: str, completed: int = 0):
        self.seed = seed
        self.index = index
        self.reason = reason
        self.completed = completed
        super().__init__(
            f"trajectory (seed={seed}, index={index}) aborted: {reason}; "
            f"{completed} trajectories completed"
        )
