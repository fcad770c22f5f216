"""Typed exceptions shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
data/format problems exit 3, training divergence exits 4.
"""


class TsceptionError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TsceptionError):
    """Invalid or inconsistent configuration values."""


class ParameterError(ConfigurationError):
    """A single argument is out of its legal range."""


class NyquistError(ConfigurationError):
    """Filter band edge at or above the Nyquist frequency."""


class DimensionError(TsceptionError):
    """Array shapes incompatible for the requested operation."""


class StatisticsError(TsceptionError):
    """Too few samples to compute the required statistics."""


class UsageError(TsceptionError):
    """Operation invoked on an unsupported kind of value."""


class DataError(TsceptionError):
    """Non-finite or otherwise unusable data values."""


class LabelError(DataError):
    """Label value outside its admissible range."""


class AlignmentError(DataError):
    """Label track does not cover an epoch midpoint."""


class LengthError(DataError):
    """Signal too short for the requested operation."""


class EmptyInputError(DataError):
    """Requested window exceeds the available duration."""


class StratificationError(DataError):
    """A class is too small to stratify into the requested splits."""


class FormatError(DataError):
    """Malformed, truncated, or mismatched binary file."""


class ShapeError(FormatError):
    """Stored tensor shapes inconsistent with the declared configuration."""


class DivergenceError(TsceptionError):
    """Training produced a non-finite loss or gradient."""
