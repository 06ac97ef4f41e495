class PcgError(Exception):
    """Base class for all errors raised by pcgscreen."""


class ConfigurationError(PcgError, ValueError):
    pass


class UnsupportedRateError(ConfigurationError):
    pass


class ManifestError(PcgError):
    pass


class DecodeError(PcgError):
    pass


class SegmentationError(PcgError):
    pass


class InsufficientBeatsError(PcgError):
    """Raised when a recording has fewer complete beats than required."""

    def __init__(self, record_id, found, required):
        super().__init__(f"{record_id}: {found} complete beats, {required} required")
        self.record_id = record_id
        self.found = found
        self.required = required
