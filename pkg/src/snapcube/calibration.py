"""Radiometric preprocessing: white-reference correction, spectral
crosstalk correction, and Gaussian smoothing.

Crosstalk is modeled as a single spatially-invariant linear mixing of the
per-pixel spectrum; correction inverts the user-supplied mixing matrix
and clips negative reflectance to zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import NonPositiveSigma, ShapeMismatch, SingularMatrix
from .mosaic import DTYPE, HyperCube, MosaicImage

log = logging.getLogger(__name__)

CONDITION_WARN_THRESHOLD = 1e6


@dataclass(frozen=True)
class CrosstalkMatrix:
    """Linear band-mixing model: ``mixing[i, j]`` is the fraction of
    band-j signal that leaks into the band-i channel."""

    mixing: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mixing, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeMismatch(f"mixing matrix must be square, got {m.shape}")
        if np.any(np.diag(m) <= 0):
            raise ShapeMismatch("mixing matrix needs a positive diagonal")
        cond = np.linalg.cond(m)
        if not np.isfinite(cond):
            raise SingularMatrix("mixing matrix is singular")
        if cond > CONDITION_WARN_THRESHOLD:
            log.warning("crosstalk matrix condition number %.3g", cond)
        object.__setattr__(self, "mixing", m)

    @property
    def size(self) -> int:
        return self.mixing.shape[0]

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.mixing))

    @classmethod
    def identity(cls, size: int = 16) -> "CrosstalkMatrix":
        return cls(mixing=np.eye(size))


def white_correct(
    raw: MosaicImage,
    white: MosaicImage,
    dark: MosaicImage | None = None,
    eps: float = 1e-6,
    clip_max: float = 2.0,
) -> MosaicImage:
    """Convert raw counts to reflectance: ``(raw - dark) / (white - dark)``.

    Output is clamped to ``[0, clip_max]``; the default ceiling of 2.0
    retains specular overshoot.  Pixels where ``white - dark <= eps`` are
    degenerate: they are set to 0 and their count is logged.
    """
    if white.data.shape != raw.data.shape:
        raise ShapeMismatch(
            f"white shape {white.data.shape} != raw {raw.data.shape}"
        )
    if dark is not None and dark.data.shape != raw.data.shape:
        raise ShapeMismatch(
            f"dark shape {dark.data.shape} != raw {raw.data.shape}"
        )
    dark_data = dark.data if dark is not None else np.zeros_like(raw.data)
    denom = white.data.astype(np.float64) - dark_data.astype(np.float64)
    num = raw.data.astype(np.float64) - dark_data.astype(np.float64)
    degenerate = denom <= eps
    n_degenerate = int(degenerate.sum())
    if n_degenerate:
        log.warning(
            "white correction: %d degenerate pixel(s) set to 0", n_degenerate
        )
        denom = np.where(degenerate, 1.0, denom)
    out = np.clip(num / denom, 0.0, clip_max)
    out[degenerate] = 0.0
    return MosaicImage(
        data=out.astype(DTYPE), pattern=raw.pattern, phase=raw.phase
    )


def apply_mixing(cube: HyperCube, m: CrosstalkMatrix) -> HyperCube:
    """Forward crosstalk model: mix every pixel spectrum with ``m``.

    Test oracle for :func:`crosstalk_correct`; also useful to synthesize
    crosstalk-afflicted data.
    """
    if cube.bands != m.size:
        raise ShapeMismatch(f"cube has {cube.bands} bands, matrix is {m.size}")
    mixed = np.einsum(
        "ij,jhw->ihw", m.mixing, cube.data.astype(np.float64)
    )
    return HyperCube(
        data=np.clip(mixed, 0.0, None).astype(DTYPE),
        wavelengths_nm=cube.wavelengths_nm,
    )


def crosstalk_correct(cube: HyperCube, m: CrosstalkMatrix) -> HyperCube:
    """Invert the linear band mixing per pixel spectrum.

    Negative results are clipped to zero: negative reflectance is
    unphysical.
    """
    if cube.bands != m.size:
        raise ShapeMismatch(f"cube has {cube.bands} bands, matrix is {m.size}")
    try:
        inv = np.linalg.inv(m.mixing)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("mixing matrix is singular") from exc
    corrected = np.einsum("ij,jhw->ihw", inv, cube.data.astype(np.float64))
    return HyperCube(
        data=np.clip(corrected, 0.0, None).astype(DTYPE),
        wavelengths_nm=cube.wavelengths_nm,
    )


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ``ceil(3*sigma)``."""
    if sigma <= 0:
        raise NonPositiveSigma(f"sigma must be > 0, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(img, sigma: float = 1.5):
    """Separable Gaussian blur with edge replication.

    Accepts a :class:`MosaicImage` or a :class:`HyperCube` (smoothed per
    band) and returns the same type.
    """
    kernel = gaussian_kernel(sigma)

    def smooth_plane(plane: np.ndarray) -> np.ndarray:
        tmp = ndimage.correlate1d(
            plane.astype(np.float64), kernel, axis=0, mode="nearest"
        )
        return ndimage.correlate1d(tmp, kernel, axis=1, mode="nearest")

    if isinstance(img, MosaicImage):
        return MosaicImage(
            data=smooth_plane(img.data).astype(DTYPE),
            pattern=img.pattern,
            phase=img.phase,
        )
    if isinstance(img, HyperCube):
        out = np.stack([smooth_plane(band) for band in img.data])
        return HyperCube(
            data=out.astype(DTYPE), wavelengths_nm=img.wavelengths_nm
        )
    raise TypeError(f"expected MosaicImage or HyperCube, got {type(img)!r}")
