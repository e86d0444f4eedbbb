"""Exception hierarchy shared across the pipeline stages."""


class SatNowcastError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGridError(SatNowcastError):
    """Grid definition is degenerate (zero extent or non-positive size)."""


class DomainError(SatNowcastError):
    """Input value outside the documented validity range."""


class ShapeError(SatNowcastError):
    """Array arguments have inconsistent shapes."""


class CadenceError(SatNowcastError):
    """Time series does not follow the required uniform cadence."""


class OutOfRangeError(SatNowcastError):
    """Requested time lies outside the available data span."""


class AlignmentError(SatNowcastError):
    """Prediction and truth timestamps do not line up."""


class RasterFormatError(SatNowcastError):
    """Base class for raster file format violations."""


class MalformedHeaderError(RasterFormatError):
    """Bad magic bytes, unreadable header length or invalid header JSON."""


class TruncatedPayloadError(RasterFormatError):
    """File ends before the declared payload is complete."""


class ChecksumError(RasterFormatError):
    """Stored payload checksum does not match the recomputed one."""


class GenerationError(SatNowcastError):
    """Synthetic scene generation could not satisfy its constraints."""


class SamplingError(SatNowcastError):
    """No admissible training crop could be drawn."""


class TrainingDivergedError(SatNowcastError):
    """Loss became non-finite during optimization."""

    def __init__(self, iteration: int):
        super().__init__(f"loss became non-finite at iteration {iteration}")
        self.iteration = iteration


class EmptySampleError(SatNowcastError):
    """A metric was requested over zero counted pixels."""


class ConfigError(SatNowcastError):
    """Pipeline configuration is invalid (unknown or ill-typed keys)."""
