"""Exception types shared across the package."""


class StreamPoisonError(Exception):
    """Base class for package-specific failures."""


class UndefinedMetricError(StreamPoisonError, ValueError):
    """A metric has no defined value for the given inputs (e.g. cosine of a zero vector)."""


class CalibrationError(StreamPoisonError, ValueError):
    """Threshold calibration was asked of data that cannot support it."""


class UnsupportedDefenseError(StreamPoisonError, TypeError):
    """The requested operation has no meaning for this defense variant."""


class AttackError(StreamPoisonError, RuntimeError):
    """An attack could not be run as configured (e.g. no feasible initialization)."""


class IngestionError(StreamPoisonError, ValueError):
    """CSV ingestion failed; the message carries row/column context."""
