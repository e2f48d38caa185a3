"""Exception types shared across the package."""


class TilekitError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(TilekitError):
    """File contents do not match the expected encoding."""


class ChecksumError(FormatError):
    """Payload checksum does not match the header declaration."""


class InvalidDimension(TilekitError):
    """A requested size is empty, negative, or otherwise unusable."""


class OutOfBounds(TilekitError):
    """A rectangle or placement falls outside its parent buffer."""


class InvalidTileSize(TilekitError):
    """Tile size incompatible with the image being tiled."""


class ShapeError(TilekitError):
    """Array shapes do not line up for the requested operation."""


class ChannelMismatch(ShapeError):
    """Channel count differs from what the operation expects."""


class InvalidRatio(TilekitError):
    """A ratio argument is outside its valid range."""


class EmptyInput(TilekitError):
    """An operation that needs at least one element got none."""


class DetectorError(TilekitError):
    """An artifact detector failed on a sample."""


class DivergenceError(TilekitError):
    """Training loss became non-finite."""


class ScaleCompositionError(TilekitError):
    """Pipeline stage scales do not compose to the target resolution."""


class UsageError(TilekitError):
    """Bad command-line usage."""


class TooSmall(TilekitError):
    """Input is smaller than the analysis window requires."""
