"""Baseline demosaicers: per-band bilinear and Catmull-Rom bicubic
lattice interpolation, and the intensity-difference method.

Each band of the mosaic lives on a cell-strided lattice (stride 4 for a
4x4 pattern, offset by the band's filter cell).  The interpolators fill
the missing pixels per band; the intensity-difference method first
estimates a full-resolution intensity image from the raw mosaic and
interpolates only the band-minus-intensity residuals, which exploits the
spatial detail shared across bands.

Border policy is edge replication everywhere so the three baselines stay
comparable.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

from .errors import DimensionNotDivisible, PhaseMismatch
from .mosaic import DTYPE, HyperCube, MosaicImage

log = logging.getLogger(__name__)

CATMULL_ROM_A = -0.5


def _check_input(mi: MosaicImage) -> int:
    k = mi.pattern.rows
    if mi.phase != (0, 0):
        raise PhaseMismatch(f"phase must be (0, 0), got {mi.phase}")
    if mi.height % k or mi.width % k:
        raise DimensionNotDivisible(
            f"{mi.width}x{mi.height} image not divisible by cell size {k}"
        )
    return k


def _lattice_coords(n_out: int, offset: int, k: int, n_samples: int) -> np.ndarray:
    """Continuous lattice coordinate of each output pixel, clamped to the
    sample hull (clamping implements nearest-sample extrapolation)."""
    g = (np.arange(n_out, dtype=np.float64) - offset) / k
    return np.clip(g, 0.0, float(n_samples - 1))


def _bilinear_plane(
    samples: np.ndarray, offset_rc: tuple[int, int], k: int, out_hw: tuple[int, int]
) -> np.ndarray:
    """Bilinear interpolation of a sample lattice to full resolution."""
    s = samples.astype(np.float64)
    hs, ws = s.shape
    gy = _lattice_coords(out_hw[0], offset_rc[0], k, hs)
    gx = _lattice_coords(out_hw[1], offset_rc[1], k, ws)
    y0 = np.floor(gy).astype(np.intp)
    x0 = np.floor(gx).astype(np.intp)
    y1 = np.minimum(y0 + 1, hs - 1)
    x1 = np.minimum(x0 + 1, ws - 1)
    wy = (gy - y0)[:, None]
    wx = (gx - x0)[None, :]
    top = (1.0 - wx) * s[np.ix_(y0, x0)] + wx * s[np.ix_(y0, x1)]
    bot = (1.0 - wx) * s[np.ix_(y1, x0)] + wx * s[np.ix_(y1, x1)]
    return (1.0 - wy) * top + wy * bot


def _catmull_rom_weights(t: np.ndarray) -> list[np.ndarray]:
    """Weights of the four taps at offsets -1..2 for fraction ``t``."""
    a = CATMULL_ROM_A
    w_m1 = a * ((t + 1) ** 3) - 5 * a * ((t + 1) ** 2) + 8 * a * (t + 1) - 4 * a
    w_0 = (a + 2) * t**3 - (a + 3) * t**2 + 1
    w_p1 = (a + 2) * (1 - t) ** 3 - (a + 3) * (1 - t) ** 2 + 1
    w_p2 = a * ((2 - t) ** 3) - 5 * a * ((2 - t) ** 2) + 8 * a * (2 - t) - 4 * a
    return [w_m1, w_0, w_p1, w_p2]


def _bicubic_plane(
    samples: np.ndarray, offset_rc: tuple[int, int], k: int, out_hw: tuple[int, int]
) -> np.ndarray:
    """Separable Catmull-Rom interpolation of a sample lattice."""
    s = samples.astype(np.float64)
    hs, ws = s.shape
    gy = _lattice_coords(out_hw[0], offset_rc[0], k, hs)
    gx = _lattice_coords(out_hw[1], offset_rc[1], k, ws)
    y0 = np.floor(gy).astype(np.intp)
    x0 = np.floor(gx).astype(np.intp)
    wys = _catmull_rom_weights(gy - y0)
    wxs = _catmull_rom_weights(gx - x0)
    out = np.zeros(out_hw, dtype=np.float64)
    for i in range(4):
        yi = np.clip(y0 + i - 1, 0, hs - 1)
        for j in range(4):
            xj = np.clip(x0 + j - 1, 0, ws - 1)
            out += wys[i][:, None] * wxs[j][None, :] * s[np.ix_(yi, xj)]
    return out


def _per_band(mi: MosaicImage, interpolate) -> np.ndarray:
    k = mi.pattern.rows
    out = np.empty((mi.pattern.bands, mi.height, mi.width), dtype=np.float64)
    for r in range(k):
        for c in range(k):
            band = mi.pattern.band_at[r, c]
            samples = mi.data[r::k, c::k]
            out[band] = interpolate(samples, (r, c), k, (mi.height, mi.width))
    return out


def demosaic_bilinear(mi: MosaicImage) -> HyperCube:
    """Per-band bilinear interpolation of the sparse band lattices."""
    _check_input(mi)
    out = _per_band(mi, _bilinear_plane)
    return HyperCube(
        data=out.astype(DTYPE), wavelengths_nm=mi.pattern.wavelengths_nm
    )


def demosaic_bicubic(mi: MosaicImage) -> HyperCube:
    """Per-band Catmull-Rom interpolation; undershoot is clipped at 0."""
    _check_input(mi)
    out = _per_band(mi, _bicubic_plane)
    undershoot = int((out < 0).sum())
    if undershoot:
        log.info("bicubic demosaic: %d value(s) clipped at 0", undershoot)
        out = np.clip(out, 0.0, None)
    return HyperCube(
        data=out.astype(DTYPE), wavelengths_nm=mi.pattern.wavelengths_nm
    )


def estimate_intensity(mi: MosaicImage) -> np.ndarray:
    """Full-resolution intensity estimate: normalized cell-sized moving
    average over the mosaic (window rows/cols ``[i-2, i+1]`` for a 4x4
    cell, edge replicated)."""
    k = _check_input(mi)
    kernel = np.full((k, k), 1.0 / (k * k), dtype=np.float64)
    return ndimage.correlate(
        mi.data.astype(np.float64), kernel, mode="nearest"
    )


def demosaic_intensity_difference(mi: MosaicImage) -> HyperCube:
    """Intensity-difference demosaicing.

    Steps: estimate intensity image I; per band, take the sparse
    differences (mosaic - I) at that band's sample positions; bilinearly
    interpolate the differences to full resolution; output I + residual,
    clamped at 0.
    """
    k = _check_input(mi)
    intensity = estimate_intensity(mi)
    diff = mi.data.astype(np.float64) - intensity
    out = np.empty((mi.pattern.bands, mi.height, mi.width), dtype=np.float64)
    for r in range(k):
        for c in range(k):
            band = mi.pattern.band_at[r, c]
            d_full = _bilinear_plane(
                diff[r::k, c::k], (r, c), k, (mi.height, mi.width)
            )
            out[band] = intensity + d_full
    out = np.clip(out, 0.0, None)
    return HyperCube(
        data=out.astype(DTYPE), wavelengths_nm=mi.pattern.wavelengths_nm
    )
