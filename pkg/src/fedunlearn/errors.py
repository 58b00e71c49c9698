"""Exception types shared across the package."""


class SimulationError(Exception):
    """Base class for every error raised by fedunlearn."""


class InputDomainError(SimulationError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ConsistencyError(SimulationError, RuntimeError):
    """Model bookkeeping would be violated (e.g. forgetting unseen data)."""

    def __init__(self, message, device=None):
        if device is not None:
            message = f"device {device}: {message}"
        super().__init__(message)
        self.device = device


class ConfigError(SimulationError, ValueError):
    """Invalid experiment, selection or device configuration."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ParseError(SimulationError, ValueError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DegenerateReportError(SimulationError, ValueError):
    """A recovery report cannot be formed from the given model."""
