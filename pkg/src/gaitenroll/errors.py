"""Exception types shared across the package."""


class NumericError(ArithmeticError):
    """A numeric operation produced NaN or Inf, or was applied to bad shapes."""


class DataFormatError(ValueError):
    """An input file violates its documented format."""


class GalleryError(ValueError):
    """A gallery query or construction was invalid (bad K, dimension, duplicate)."""


class ScenarioError(ValueError):
    """A scenario request cannot be satisfied by the dataset."""


class CheckpointError(ValueError):
    """A checkpoint file is corrupt or inconsistent with its config."""


class ConfigError(ValueError):
    """A run configuration is malformed or contains unknown keys."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""
