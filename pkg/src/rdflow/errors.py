"""Shared exception types for the package."""


class ContractViolation(ValueError):
    """An argument violates a documented precondition."""


class ConfigError(ValueError):
    """A configuration key, value, or combination is invalid."""


class NumericFailure(ArithmeticError):
    """A NaN or infinity appeared where finite numbers are required.

    Carries optional context (operation name, training iteration) so the
    failure site can be reported without a debugger.
    """

    def __init__(self, message: str, node: str | None = None, iteration: int | None = None):
        parts = [message]
        if node is not None:
            parts.append(f"node={node}")
        if iteration is not None:
            parts.append(f"iteration={iteration}")
        super().__init__("; ".join(parts))
        self.node = node
        self.iteration = iteration


class GraphDegreeError(ValueError):
    """A graph node has a degenerate (non-positive) degree."""


class DivergenceError(RuntimeError):
    """Adaptive integration could not reach the end time.

    The last accepted time and state are attached so a caller can inspect
    how far the solve got.
    """

    def __init__(self, message: str, last_time: float, last_state):
        super().__init__(message)
        self.last_time = last_time
        self.last_state = last_state
