"""Exception taxonomy shared by every stabilitykit module.

The CLI maps these onto process exit codes; see ``stabilitykit.cli``.
"""


class StabilityKitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(StabilityKitError):
    """Malformed input file (bad magic, unparseable header, ...)."""


class TruncatedError(ParseError):
    """Input stream ended mid-payload."""


class DimensionMismatch(StabilityKitError):
    """Operands or frames do not share the required dimensions."""


class EmptyInput(StabilityKitError):
    """An input collection contained nothing usable."""


class InsufficientFrames(StabilityKitError):
    """Sequence too short for the requested operation.

    ``required`` carries the minimum frame count when known.
    """

    def __init__(self, message: str, required: int | None = None):
        super().__init__(message)
        self.required = required


class DegenerateScene(StabilityKitError):
    """Frame content has too little texture for motion analysis."""


class TrackingFailure(StabilityKitError):
    """Every tracked point was rejected."""


class UnderDetermined(StabilityKitError):
    """Not enough inlier matches to fit the requested motion model."""


class ConfigError(StabilityKitError):
    """Invalid or inconsistent configuration values."""


class MarginError(StabilityKitError):
    """Synthetic warp would sample outside the source image."""


class InsufficientData(StabilityKitError):
    """Dataset too small (or too degenerate) to train or aggregate."""


class DegenerateBatch(StabilityKitError):
    """Batch statistics are undefined (e.g. constant target scores)."""


class DegenerateInput(StabilityKitError):
    """Statistic undefined for this input (e.g. constant vector)."""


class InsufficientRatings(StabilityKitError):
    """A video has fewer ratings than MOS aggregation requires."""


class EmptyAfterCleaning(StabilityKitError):
    """Outlier rejection removed every subject."""
