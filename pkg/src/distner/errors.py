"""Exception types shared across the package."""
from __future__ import annotations


class DistnerError(Exception):
    """Base class for all package-specific errors."""


class CorpusFormatError(DistnerError):
    """A corpus or gazetteer file violates the column format."""


class SchemaError(DistnerError):
    """A label or entity type is not part of the active tag scheme."""


class CheckpointError(DistnerError):
    """A checkpoint archive is missing, corrupted, or fails its checksum."""


class CheckpointVersionError(CheckpointError):
    """A checkpoint was written by an incompatible format version."""


class ParameterError(DistnerError, ValueError):
    """A hyperparameter or configuration value is out of range."""


class ShapeError(DistnerError, ValueError):
    """Array arguments do not align (length or dimension mismatch)."""


class AdapterError(DistnerError):
    """A masked-LM adapter failed to answer a query."""


class TrainingError(DistnerError):
    """Training produced a non-finite loss or gradient."""


class ConfigError(DistnerError):
    """A config file contains unknown keys or unusable values."""


class CliError(DistnerError):
    """A subcommand cannot run, e.g. a required input artifact is missing."""
