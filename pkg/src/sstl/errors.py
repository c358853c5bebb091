"""Exception types shared across the pipeline.

The CLI maps each class to a distinct exit code.
"""


class SSTLError(ValueError):
    """Base class for pipeline errors."""


class ConfigError(SSTLError):
    """Invalid or malformed run configuration."""


class IdentificationError(SSTLError):
    """Segmentation or parameter extraction could not produce a valid result."""


class TrainingDivergence(SSTLError):
    """Mapping network training produced a non-finite loss."""


class DegenerateDataError(SSTLError):
    """Input data cannot support the requested fit."""
