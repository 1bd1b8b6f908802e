"""
Exception types shared by the training, evaluation and command-line code.
"""
from typing import Optional, Sequence


class One2OneError(Exception):
    """Base class for every error raised by this package"""


class DimensionError(One2OneError, ValueError):
    """Raised when tensor shapes do not fit an operation"""

    def __init__(self, message: str, *shapes: Sequence[int]):
        self.shapes = tuple(tuple(s) for s in shapes)
        if self.shapes:
            message = f"{message} (shapes: {', '.join(str(s) for s in self.shapes)})"
        super().__init__(message)


class SpecError(One2OneError, ValueError):
    """Raised when a generator or discriminator spec cannot be built"""


class TrainingError(One2OneError):
    """Raised when training hits a non-finite loss"""

    def __init__(self, iteration: int, loss_name: str, value: float, diagnostic_path: Optional[str] = None):
        self.iteration = iteration
        self.loss_name = loss_name
        self.value = value
        self.diagnostic_path = diagnostic_path
        super().__init__(self._describe())

    def _describe(self) -> str:
        message = f"Non-finite loss '{self.loss_name}' = {self.value} at iteration {self.iteration}"
        if self.diagnostic_path:
            message += f"; diagnostic snapshot written to {self.diagnostic_path}"
        return message

    def with_diagnostic(self, path: str) -> "TrainingError":
        self.diagnostic_path = path
        self.args = (self._describe(),)
        return self


class ConfigError(One2OneError, ValueError):
    """Raised for invalid run configuration files"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        location = []
        if key is not None:
            location.append(f"key '{key}'")
        if line is not None:
            location.append(f"line {line}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class ParseError(One2OneError, ValueError):
    """Raised for malformed CSV, PGM or manifest files"""

    def __init__(self, path: str, line: Optional[int], message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class MetricUnavailableError(One2OneError):
    """Raised when a metric needs a ground-truth oracle the task does not have"""


class TaskGenerationError(One2OneError):
    """Raised when a synthetic task cannot be generated as requested"""


class EmptyDomainError(One2OneError):
    """Raised when a sampler has nothing to draw from"""


class CheckpointError(One2OneError):
    """Raised for unreadable checkpoints or checkpoints that do not fit a task"""


class TapeError(One2OneError, RuntimeError):
    """Raised when backward() is called on a value the tape did not record"""
