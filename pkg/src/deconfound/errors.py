"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad user input: config fields, shapes, file contents, CLI arguments."""


class ShapeMismatchError(ValidationError):
    """Operands with incompatible shapes; the message names both shapes."""


class ManifestMismatchError(ValidationError):
    """Window sets with different channel manifests were combined."""


class NumericsError(ArithmeticError):
    """A public tensor operation produced a NaN or Inf."""


class SimulationError(RuntimeError):
    """The simulated recursion left its stable range; message carries the step."""


class TrainingDivergedError(RuntimeError):
    """Validation loss became non-finite; message carries the last finite epoch."""


class StageError(RuntimeError):
    """A pipeline stage failed; wraps the underlying cause with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
