"""Exception types raised by the library."""


class DispflowError(Exception):
    """Base class for all library errors."""


class ConstraintViolation(DispflowError, ValueError):
    """A point is too far off the sphere, or a vector is not tangent."""


class TubeExitError(DispflowError):
    """A state left the tubular neighbourhood of the sphere.

    The evolver treats this as a step rejection.
    """


class NonFiniteStateError(DispflowError, FloatingPointError):
    """NaN or Inf encountered in a grid field."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


class ContractionFailure(DispflowError):
    """The Picard iteration of one step did not converge."""


class StepError(DispflowError):
    """A time step failed; carries the step index and the partial trajectory."""

    def __init__(self, message, step, trajectory=None):
        super().__init__(message)
        self.step = step
        self.trajectory = trajectory


class ParameterError(DispflowError, ValueError):
    """Invalid physical or numerical parameter."""
