"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """Invalid or unsupported parameter value.

    ``key`` carries the dotted config path when the error comes from a
    parsed config file.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class DegenerateModelError(ArithmeticError):
    """Covariance submatrix is (numerically) singular."""


class SolverError(RuntimeError):
    """Simplex engine failed (iteration cap, unboundedness, infeasibility)."""

    def __init__(self, message, instance=None):
        super().__init__(message)
        self.instance = instance


class SimulationError(RuntimeError):
    """Module error raised while running a frame loop."""

    def __init__(self, message, frame=None):
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)
        self.frame = frame
