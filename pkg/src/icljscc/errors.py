"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DegenerateInputError(ValueError):
    """Input is degenerate for the operation (e.g. scaling a zero block)."""


class ConvergenceError(ArithmeticError):
    """An iterative numerical routine hit its iteration cap."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class TrainingDivergedError(RuntimeError):
    """Training loss blew past the divergence threshold."""


class CapacityError(ValueError):
    """Prompt is longer than the model's positional table."""


class CheckpointError(Exception):
    """Base class for checkpoint read failures."""


class CheckpointVersionError(CheckpointError):
    """Bad magic bytes or unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ended before a complete record was read."""


class CheckpointShapeError(CheckpointError, ShapeError):
    """Stored tensor does not match the shape expected by the current config."""
