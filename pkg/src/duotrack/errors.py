"""Exception types shared across the package."""


class DuotrackError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DuotrackError, ValueError):
    """Bad configuration: parse failure, unknown key, or out-of-range value."""


class FixtureFormatError(DuotrackError):
    """A fixture file is corrupt or does not match its declared format."""


class MissingFeatureError(DuotrackError):
    """A provider has no data for the requested frame or box."""


class EmptyGalleryError(DuotrackError):
    """Distance queried against a gallery that holds no embeddings."""


class EmptyBatchError(DuotrackError):
    """A batch operation received no items."""


class OutOfBoundsError(DuotrackError):
    """A region of interest lies entirely outside the score-map extent."""


class DegenerateStateError(DuotrackError):
    """A motion state cannot be converted back to a valid box."""


class NumericalError(DuotrackError):
    """A numerically singular system was encountered."""


class SequenceError(DuotrackError):
    """Frames were fed to the tracker out of order."""


class MotParseError(DuotrackError):
    """A tracking CSV file could not be parsed."""


class MetricsInputError(DuotrackError, ValueError):
    """Evaluation input violates its contract (e.g. duplicate ids in a frame)."""
