"""Mosaic/cube data model and the exact index maps between the two views.

A square multispectral filter array (default 4x4, 16 bands) samples one
band per pixel.  The single-plane sensor image and the band-major cube
are two arrangements of the same samples; :func:`m2c_resample` and
:func:`cube_to_mosaic` convert between them losslessly.

Coordinate conventions used throughout the package:

* image arrays are row-major ``[H, W]``; ``(row, col)`` indexing,
* cubes are band-major ``[L, H, W]``,
* band ``z`` of the default pattern sits at filter cell
  ``(row = z // 4, col = z % 4)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BandCountMismatch,
    DimensionNotDivisible,
    EmptyInput,
    MisalignedPatch,
    NonFiniteValue,
    NonMonotonicWavelengths,
    OutOfBounds,
    PhaseMismatch,
    ShapeMismatch,
    WavelengthOutOfRange,
)

DTYPE = np.float32

WAVELENGTH_MIN_NM = 350.0
WAVELENGTH_MAX_NM = 1100.0

# Sensor band range; 16 default band centers are spaced linearly across it.
DEFAULT_RANGE_NM = (463.0, 638.0)


def default_wavelengths(bands: int = 16) -> np.ndarray:
    """Band centers linearly spaced over the default sensor range."""
    lo, hi = DEFAULT_RANGE_NM
    return np.linspace(lo, hi, bands)


@dataclass(frozen=True)
class MosaicPattern:
    """Square filter-cell layout plus the band center wavelengths.

    ``band_at[r, c]`` is the band index sampled by pixels whose position
    modulo the cell size is ``(r, c)``; it must be a permutation of
    ``0..L-1``.
    """

    band_at: np.ndarray
    wavelengths_nm: np.ndarray

    def __post_init__(self):
        band_at = np.asarray(self.band_at, dtype=np.int64)
        wl = np.asarray(self.wavelengths_nm, dtype=np.float64)
        if band_at.ndim != 2 or band_at.shape[0] != band_at.shape[1]:
            raise ShapeMismatch(f"band_at must be square, got {band_at.shape}")
        n = band_at.size
        if not np.array_equal(np.sort(band_at.ravel()), np.arange(n)):
            raise ShapeMismatch("band_at must contain each band index exactly once")
        if wl.shape != (n,):
            raise BandCountMismatch(
                f"expected {n} wavelengths, got {wl.shape}"
            )
        if not np.all(np.diff(wl) > 0):
            raise NonMonotonicWavelengths("wavelengths_nm must be strictly increasing")
        if wl[0] < WAVELENGTH_MIN_NM or wl[-1] > WAVELENGTH_MAX_NM:
            raise WavelengthOutOfRange(
                f"wavelengths [{wl[0]:.1f}, {wl[-1]:.1f}] nm outside "
                f"[{WAVELENGTH_MIN_NM:.0f}, {WAVELENGTH_MAX_NM:.0f}] nm"
            )
        object.__setattr__(self, "band_at", band_at)
        object.__setattr__(self, "wavelengths_nm", wl)

    @property
    def rows(self) -> int:
        return self.band_at.shape[0]

    @property
    def cols(self) -> int:
        return self.band_at.shape[1]

    @property
    def bands(self) -> int:
        return self.band_at.size

    def cell_of(self, band: int) -> tuple[int, int]:
        """Filter cell (row, col) that samples ``band``."""
        r, c = np.argwhere(self.band_at == band)[0]
        return int(r), int(c)

    @classmethod
    def default(cls, size: int = 4) -> "MosaicPattern":
        """Canonical row-major layout: band ``z`` at cell ``(z // size, z % size)``."""
        grid = np.arange(size * size).reshape(size, size)
        return cls(band_at=grid, wavelengths_nm=default_wavelengths(size * size))


@dataclass
class MosaicImage:
    """Single-plane sensor image with its filter pattern.

    ``phase`` gives the filter cell (row, col) under pixel (0, 0); patch
    extraction keeps it at (0, 0) so training and inference always see
    the same filter alignment.
    """

    data: np.ndarray
    pattern: MosaicPattern
    phase: tuple[int, int] = (0, 0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=DTYPE)
        if data.ndim != 2:
            raise ShapeMismatch(f"mosaic data must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteValue("mosaic contains NaN or Inf")
        self.data = data
        self.phase = (int(self.phase[0]), int(self.phase[1]))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class HyperCube:
    """Dense band-major reflectance volume ``[L, H, W]``."""

    data: np.ndarray
    wavelengths_nm: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=DTYPE)
        if data.ndim != 3:
            raise ShapeMismatch(f"cube data must be 3-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise NonFiniteValue("cube contains NaN or Inf")
        if self.wavelengths_nm is None:
            wl = default_wavelengths(data.shape[0])
        else:
            wl = np.asarray(self.wavelengths_nm, dtype=np.float64)
        if wl.shape != (data.shape[0],):
            raise BandCountMismatch(
                f"cube has {data.shape[0]} bands but {wl.shape[0]} wavelengths"
            )
        self.data = data
        self.wavelengths_nm = wl

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


def m2c_resample(mi: MosaicImage) -> HyperCube:
    """Rearrange a mosaic into a cube of per-band sample planes.

    Output is ``[L, H/k, W/k]`` for cell size ``k``; band ``z`` collects
    the pixels whose filter cell holds ``z``.  Pure rearrangement: every
    input pixel appears exactly once in the output.
    """
    k = mi.pattern.rows
    if mi.phase != (0, 0):
        raise PhaseMismatch(f"phase must be (0, 0), got {mi.phase}")
    if mi.height % k or mi.width % k:
        raise DimensionNotDivisible(
            f"{mi.width}x{mi.height} image not divisible by cell size {k}"
        )
    bands = mi.pattern.bands
    out = np.empty((bands, mi.height // k, mi.width // k), dtype=DTYPE)
    for r in range(k):
        for c in range(k):
            out[mi.pattern.band_at[r, c]] = mi.data[r::k, c::k]
    return HyperCube(data=out, wavelengths_nm=mi.pattern.wavelengths_nm)


def cube_to_mosaic(
    cube: HyperCube, pattern: MosaicPattern, mode: str = "inverse"
) -> MosaicImage:
    """Project a cube back onto the single-plane sensor layout.

    ``mode="inverse"`` expects a subsampled cube (the output of
    :func:`m2c_resample`) and is its exact inverse.  ``mode="simulate"``
    expects a full-resolution cube and keeps, at every pixel, the band
    its filter cell would have measured; this is how mosaic captures are
    synthesized from full-spectrum ground truth.
    """
    if cube.bands != pattern.bands:
        raise BandCountMismatch(
            f"cube has {cube.bands} bands, pattern has {pattern.bands}"
        )
    k = pattern.rows
    if mode == "inverse":
        out = np.empty((cube.height * k, cube.width * k), dtype=DTYPE)
        for r in range(k):
            for c in range(k):
                out[r::k, c::k] = cube.data[pattern.band_at[r, c]]
    elif mode == "simulate":
        h, w = cube.height, cube.width
        band_map = pattern.band_at[
            (np.arange(h) % k)[:, None], (np.arange(w) % k)[None, :]
        ]
        out = cube.data[band_map, np.arange(h)[:, None], np.arange(w)[None, :]]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return MosaicImage(data=out, pattern=pattern)


def extract_patch(mi: MosaicImage, x0: int, y0: int, w: int, h: int) -> MosaicImage:
    """Copy an aligned rectangle ``(x0, y0, w, h)`` out of a mosaic.

    Offsets and sizes must be multiples of the cell size so the patch
    keeps phase (0, 0).
    """
    k = mi.pattern.rows
    if mi.phase != (0, 0):
        raise PhaseMismatch(f"source phase must be (0, 0), got {mi.phase}")
    if x0 % k or y0 % k:
        raise MisalignedPatch(f"offset ({x0}, {y0}) not a multiple of {k}")
    if w % k or h % k:
        raise MisalignedPatch(f"patch size {w}x{h} not a multiple of {k}")
    if x0 < 0 or y0 < 0 or x0 + w > mi.width or y0 + h > mi.height:
        raise OutOfBounds(
            f"patch ({x0}, {y0}, {w}, {h}) outside {mi.width}x{mi.height} image"
        )
    return MosaicImage(
        data=mi.data[y0 : y0 + h, x0 : x0 + w].copy(), pattern=mi.pattern
    )


def average_frames(frames: list[MosaicImage]) -> MosaicImage:
    """Pixel-wise mean of repeated captures (sensor-noise reduction)."""
    if not frames:
        raise EmptyInput("no frames to average")
    first = frames[0]
    for f in frames[1:]:
        if f.data.shape != first.data.shape:
            raise ShapeMismatch(
                f"frame shape {f.data.shape} != {first.data.shape}"
            )
        if not np.array_equal(f.pattern.band_at, first.pattern.band_at):
            raise ShapeMismatch("frames carry different patterns")
        if f.phase != first.phase:
            raise PhaseMismatch("frames carry different phases")
    stack = np.stack([f.data for f in frames]).astype(np.float64)
    return MosaicImage(
        data=stack.mean(axis=0).astype(DTYPE),
        pattern=first.pattern,
        phase=first.phase,
    )
