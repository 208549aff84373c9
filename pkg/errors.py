"""
Error kinds raised across the unmixing package.

ValidationError subclasses mean the caller passed something unusable (exit code 1
from the CLI); FormatError subclasses mean a file on disk is broken (exit code 2).
"""


class MuaError(Exception):
    """Base class for every error raised by this package"""


class ValidationError(MuaError, ValueError):
    """Input violates a shape, range or consistency rule"""


class InvalidParameter(ValidationError):
    pass


class BandMismatch(ValidationError):
    def __init__(self, l_image: int, l_library: int):
        self.l_image = l_image
        self.l_library = l_library
        super().__init__(f"image has {l_image} bands but library has {l_library}")


class ShapeMismatch(ValidationError):
    pass


class PixelCountMismatch(ShapeMismatch):
    pass


class SegmentCountMismatch(ShapeMismatch):
    pass


class RegionTooLarge(ValidationError):
    pass


class InvalidK(ValidationError):
    pass


class ZeroSpectrum(ValidationError):
    pass


class SquaresDontFit(ValidationError):
    pass


class ZeroTruth(ValidationError):
    pass


class UnmappedSignature(ValidationError):
    pass


class NotPositiveDefinite(MuaError):
    pass


class GenerationExhausted(MuaError):
    pass


class FormatError(MuaError):
    """A file does not follow its documented format"""


class BadMagic(FormatError):
    pass


class TruncatedData(FormatError):
    pass


class HeaderMismatch(FormatError):
    pass


class RaggedRows(FormatError):
    pass


class NonNumeric(FormatError):
    pass
