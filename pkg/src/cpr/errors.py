"""Exception hierarchy shared by every module in the package."""


class CprError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CprError):
    """Invalid hyperparameter, mode, or inconsistent configuration."""


class ShapeError(CprError):
    """Tensor or vector dimensions do not line up."""


class FormatError(CprError):
    """Malformed binary payload (EMB1 embedding files, CPR1 checkpoints)."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InsufficientDataError(CprError):
    """Not enough samples: class below the shot count, empty support, pool too small."""


class DegenerateInputError(CprError):
    """A vector that must have positive norm came out (numerically) zero."""


class DivergenceError(CprError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, step: int | None = None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class DeterminismError(CprError):
    """A function that must be deterministic returned different values."""


class GradientCheckError(CprError):
    """Analytic gradients disagreed with finite differences."""


class MetricError(CprError):
    """A requested metric is undefined for the given inputs."""
