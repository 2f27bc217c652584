"""Exception hierarchy shared by all vivrom modules."""


class VivromError(Exception):
    """Base class for all errors raised by vivrom."""


class DimensionError(VivromError, ValueError):
    """Inputs have incompatible or insufficient sizes."""


class ParameterError(VivromError, ValueError):
    """A scalar parameter is outside its admissible range."""


class NumericError(VivromError, ArithmeticError):
    """Non-finite values were passed to or produced by a computation."""


class DegenerateReferenceError(VivromError, ValueError):
    """The reference signal of the best-fit metric is constant."""


class DivergenceError(NumericError):
    """A time integration blew up.

    Attributes
    ----------
    time : float
        Simulation time at which the state left the admissible region.
    node : int or None
        Structural node index, when raised from a per-node model.
    """

    def __init__(self, message, time=float("nan"), node=None):
        super().__init__(message)
        self.time = time
        self.node = node


class IllConditionedError(NumericError):
    """A least-squares regressor is rank deficient."""

    def __init__(self, message, condition_number=float("inf")):
        super().__init__(message)
        self.condition_number = condition_number


class OrderTooLargeError(VivromError, ValueError):
    """Requested realization order exceeds the numerical rank of the data."""


class ModeError(VivromError, ValueError):
    """A continuous-time model was given where a discrete one is needed, or vice versa."""


class OptimizationFailure(VivromError, RuntimeError):
    """An optimizer could not find any admissible step."""


class CouplingError(VivromError, RuntimeError):
    """Partitioned coupling iterations did not converge.

    Attributes
    ----------
    residual_history : list of float
        Infinity norm of the interface residual at each sub-iteration.
    time : float
        Time of the step that failed.
    """

    def __init__(self, message, residual_history=(), time=float("nan")):
        super().__init__(message)
        self.residual_history = list(residual_history)
        self.time = time


class ConfigError(VivromError, ValueError):
    """A run configuration failed validation.

    Attributes
    ----------
    pointer : str
        JSON pointer of the offending entry.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class MappingError(VivromError, ValueError):
    """Interface point outside its element (``|xi| > 1``) or mapped to another element."""


class StagnationError(VivromError, ArithmeticError):
    """Successive residuals coincide; the relaxation factor is undefined."""
