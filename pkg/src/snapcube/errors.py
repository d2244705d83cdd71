"""Exception hierarchy shared by all snapcube modules.

Data/validation problems derive from :class:`SnapcubeError`; numerical
failures (NaN/Inf, divergence) derive from :class:`NumericalError` so the
CLI can map them to distinct exit codes.
"""


class SnapcubeError(Exception):
    """Base class for toolkit errors."""


class ShapeMismatch(SnapcubeError):
    """Array shapes are inconsistent for the requested operation."""


class DimensionNotDivisible(SnapcubeError):
    """Image dimensions are not a multiple of the mosaic cell size."""


class PhaseMismatch(SnapcubeError):
    """Mosaic pattern phase is not aligned as required."""


class BandCountMismatch(SnapcubeError):
    """Cube band count does not match the pattern or matrix size."""


class MisalignedPatch(SnapcubeError):
    """Patch offset or size is not aligned to the pattern grid."""


class OutOfBounds(SnapcubeError):
    """Requested region lies outside the image."""


class EmptyInput(SnapcubeError):
    """An operation received an empty collection."""


class SingularMatrix(SnapcubeError):
    """Mixing matrix is singular and cannot be inverted."""


class NonPositiveSigma(SnapcubeError):
    """Gaussian sigma must be strictly positive."""


class InvalidFilterCount(SnapcubeError):
    """Unsupported upsampler filter count (expected 32 or 128)."""


class CorruptCheckpoint(SnapcubeError):
    """Checkpoint file is truncated or fails validation."""


class FileFormatError(SnapcubeError):
    """Data file is malformed or does not match its sidecar."""


class VersionMismatch(SnapcubeError):
    """Checkpoint format or architecture does not match expectations."""


class EmptyDataset(SnapcubeError):
    """Training or evaluation set contains no samples."""


class EmptyRegion(SnapcubeError):
    """Pixel mask selects no pixels."""


class ImageTooSmall(SnapcubeError):
    """Image is smaller than the metric window."""


class WavelengthOutOfRange(SnapcubeError):
    """Band wavelengths fall outside the supported table range."""


class NonMonotonicWavelengths(SnapcubeError):
    """Wavelength axis must be strictly increasing."""


class IncompleteSet(SnapcubeError):
    """Shift capture set does not cover every cell offset exactly once."""


class SourceTooSmall(SnapcubeError):
    """Source cube is too small for the requested patch size."""


class InsufficientArea(SnapcubeError):
    """Not enough non-overlapping area to place the requested patches."""


class NumericalError(SnapcubeError):
    """Base class for numerical failures (CLI exit code 3)."""


class NonFiniteValue(NumericalError):
    """A forward/backward pass produced NaN or Inf."""


class NonFiniteGradient(NumericalError):
    """Optimizer received a NaN or Inf gradient."""


class NonFiniteLoss(NumericalError):
    """Training loss became NaN or Inf."""
