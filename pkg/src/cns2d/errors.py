class ConfigError(ValueError):
    """Invalid configuration (grid, solver or run config)."""


class InputError(ValueError):
    """An operation was called outside its precondition."""


class DivergenceError(ArithmeticError):
    """A time stepper produced non-finite coefficients."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")
