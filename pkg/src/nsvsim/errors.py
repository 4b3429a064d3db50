"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A structural precondition is violated (grid too small, bad exponent range, ...)."""


class ValidationError(ValueError):
    """An input fails a runtime contract (non-symmetric tensor, nonzero mean, ...)."""


class DivergenceError(RuntimeError):
    """The time stepper produced a nonfinite value."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"nonfinite state detected at step {step}")
