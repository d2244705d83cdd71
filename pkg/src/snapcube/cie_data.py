"""Embedded 5 nm colorimetry tables for the RGB renderer.

The 1931 2-degree color matching functions are generated from the
multi-lobe piecewise-Gaussian fit of Wyman, Sloan and Shirley (accurate
to about 1% of the tabulated standard observer).  The daylight
illuminant is a 6504 K Planck radiator normalized to 100 at 560 nm -- a
smooth stand-in for the tabulated daylight spectrum; within the sensor
range (463-638 nm) it tracks the standard daylight curve closely, and
the renderer normalizes to its own white point, so the residual error
does not tint the output.
"""

from __future__ import annotations

import numpy as np

TABLE_START_NM = 360.0
TABLE_END_NM = 830.0
TABLE_STEP_NM = 5.0

# sRGB (IEC 61966-2-1) linear transform from XYZ, D65 reference white.
XYZ_TO_SRGB = np.array(
    [
        [3.2406255, -1.5372080, -0.4986286],
        [-0.9689307, 1.8757561, 0.0415175],
        [0.0557101, -0.2040211, 1.0569959],
    ]
)

D65_WHITE_XYZ = np.array([0.95047, 1.0, 1.08883])


def _lobe(x: np.ndarray, peak: float, mu: float, s1: float, s2: float) -> np.ndarray:
    """Piecewise Gaussian: width s1 below the mean, s2 above."""
    sigma = np.where(x < mu, s1, s2)
    return peak * np.exp(-0.5 * ((x - mu) / sigma) ** 2)


def color_matching_functions(wavelengths_nm: np.ndarray) -> np.ndarray:
    """Approximate 1931 2-degree observer; returns [len(wl), 3]."""
    wl = np.asarray(wavelengths_nm, dtype=np.float64)
    x = (
        _lobe(wl, 1.056, 599.8, 37.9, 31.0)
        + _lobe(wl, 0.362, 442.0, 16.0, 26.7)
        - _lobe(wl, 0.065, 501.1, 20.4, 26.2)
    )
    y = _lobe(wl, 0.821, 568.8, 46.9, 40.5) + _lobe(wl, 0.286, 530.9, 16.3, 31.1)
    z = _lobe(wl, 1.217, 437.0, 11.8, 36.0) + _lobe(wl, 0.681, 459.0, 26.0, 13.8)
    return np.stack([x, y, z], axis=1)


def daylight_spd(wavelengths_nm: np.ndarray, temperature_k: float = 6504.0) -> np.ndarray:
    """Planck radiator SPD, normalized to 100 at 560 nm."""
    wl_m = np.asarray(wavelengths_nm, dtype=np.float64) * 1e-9
    c2 = 1.4388e-2  # second radiation constant, m*K
    spd = wl_m**-5 / (np.expm1(c2 / (wl_m * temperature_k)))
    ref = (560e-9) ** -5 / np.expm1(c2 / (560e-9 * temperature_k))
    return 100.0 * spd / ref


TABLE_WAVELENGTHS_NM = np.arange(
    TABLE_START_NM, TABLE_END_NM + TABLE_STEP_NM / 2, TABLE_STEP_NM
)
CMF_TABLE = color_matching_functions(TABLE_WAVELENGTHS_NM)
ILLUMINANT_TABLE = daylight_spd(TABLE_WAVELENGTHS_NM)
