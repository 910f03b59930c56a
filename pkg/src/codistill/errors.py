"""Exception hierarchy shared across the package."""


class CodistillError(Exception):
    """Base class for all package errors."""


class ShapeError(CodistillError):
    """Operand shapes are incompatible with the requested operation."""


class ParameterError(CodistillError):
    """A numeric argument is outside its valid range."""


class ConfigError(CodistillError):
    """A configuration value is missing, unknown, or invalid."""


class UsageError(CodistillError):
    """An operation was called in a way its contract forbids."""


class NumericsError(CodistillError):
    """A non-finite value appeared where only finite values are allowed."""


class DataFormatError(CodistillError):
    """An input file does not match its declared on-disk format."""


class CheckpointError(CodistillError):
    """Base class for checkpoint load/save failures."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class CheckpointCorruptionError(CheckpointError):
    """Checkpoint payload fails its integrity check."""
