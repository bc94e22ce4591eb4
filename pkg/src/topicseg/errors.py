"""Exception types shared across the package."""


class TopicsegError(Exception):
    """Base class for all package errors."""


class FormatError(TopicsegError):
    """A file does not follow the expected on-disk format."""


class DataError(TopicsegError):
    """Input values violate a data contract (non-finite, out of range)."""


class DimensionError(TopicsegError):
    """Array shapes are incompatible with the requested operation."""


class NotFittedError(TopicsegError):
    """A model was used before being fitted."""


class TrainingError(TopicsegError):
    """Optimization produced a non-finite objective."""


class ConfigError(TopicsegError):
    """A configuration file or value failed validation."""
