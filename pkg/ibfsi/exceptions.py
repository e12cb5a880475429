"""Exception types raised by the immersed-boundary engine."""

from typing import Any, Optional


class IBFSIError(Exception):
    """Base class for engine errors."""


class ConfigError(IBFSIError, ValueError):
    """Invalid configuration value or unknown key."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if key is not None:
            location += f" [{key}"
            if line is not None:
                location += f", line {line}"
            location += "]"
        super().__init__(f"{message}{location}")
        self.key = key
        self.line = line


class SolverFailure(IBFSIError, RuntimeError):
    """A linear or time-step solve did not converge."""

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class CFLViolation(SolverFailure):
    """Time step too large for the current velocity field."""


class InvertedElementError(IBFSIError, ValueError):
    """Element with non-positive deformation Jacobian."""

    def __init__(self, element: int, jacobian: float):
        super().__init__(f"Element {element} is inverted (J = {jacobian:.6g})")
        self.element = element
        self.jacobian = jacobian


class InteractionRuleError(IBFSIError, ValueError):
    """Interaction points cannot be generated or placed."""

    def __init__(self, message: str, element: Optional[int] = None):
        if element is not None:
            message = f"{message} (element {element})"
        super().__init__(message)
        self.element = element
