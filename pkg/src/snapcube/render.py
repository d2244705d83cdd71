"""Render hypercubes to display RGB for qualitative figures.

Per pixel, tristimulus values integrate reflectance x illuminant x
observer over the band axis with trapezoidal wavelength weights; the
result is normalized so a unit-reflectance spectrum lands exactly on
the reference white, converted to linear sRGB, clipped, gamma-encoded
and quantized to 8 bits.

A sensor limited to 638 nm captures little red energy, so renders of
such cubes lack red -- expected behavior, not an error.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .cie_data import (
    CMF_TABLE,
    D65_WHITE_XYZ,
    ILLUMINANT_TABLE,
    TABLE_WAVELENGTHS_NM,
    XYZ_TO_SRGB,
)
from .errors import OutOfBounds, WavelengthOutOfRange
from .hsio import write_pgm16
from .mosaic import HyperCube


def _trapezoid_weights(wavelengths: np.ndarray) -> np.ndarray:
    w = np.empty_like(wavelengths)
    w[0] = (wavelengths[1] - wavelengths[0]) / 2.0
    w[-1] = (wavelengths[-1] - wavelengths[-2]) / 2.0
    w[1:-1] = (wavelengths[2:] - wavelengths[:-2]) / 2.0
    return w


def cube_to_linear_rgb(cube: HyperCube) -> np.ndarray:
    """Linear RGB in [0, 1], shape [H, W, 3] (float64)."""
    wl = np.asarray(cube.wavelengths_nm, dtype=np.float64)
    if wl[0] < TABLE_WAVELENGTHS_NM[0] or wl[-1] > TABLE_WAVELENGTHS_NM[-1]:
        raise WavelengthOutOfRange(
            f"bands [{wl[0]:.1f}, {wl[-1]:.1f}] nm outside table range "
            f"[{TABLE_WAVELENGTHS_NM[0]:.0f}, {TABLE_WAVELENGTHS_NM[-1]:.0f}] nm"
        )
    cmf = np.stack(
        [np.interp(wl, TABLE_WAVELENGTHS_NM, CMF_TABLE[:, i]) for i in range(3)],
        axis=1,
    )  # [L, 3]
    spd = np.interp(wl, TABLE_WAVELENGTHS_NM, ILLUMINANT_TABLE)  # [L]
    dl = _trapezoid_weights(wl)
    coeff = cmf * (spd * dl)[:, None]  # [L, 3]
    white_xyz = coeff.sum(axis=0)  # unit reflectance integrates to this

    # [H, W, 3]; normalize each channel by the white integral, then scale
    # onto the reference white so the matrix maps white to (1, 1, 1).
    xyz = np.tensordot(cube.data.astype(np.float64), coeff, axes=([0], [0]))
    xyz = xyz / white_xyz * D65_WHITE_XYZ
    rgb = xyz @ XYZ_TO_SRGB.T
    return np.clip(rgb, 0.0, 1.0)


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """Standard sRGB transfer function on [0, 1] linear values."""
    low = linear <= 0.0031308
    high = 1.055 * np.power(np.clip(linear, 0.0031308, None), 1 / 2.4) - 0.055
    return np.where(low, 12.92 * linear, high)


def cube_to_rgb(cube: HyperCube) -> np.ndarray:
    """8-bit RGB rendering, shape [H, W, 3], dtype uint8."""
    encoded = srgb_encode(cube_to_linear_rgb(cube))
    return np.round(encoded * 255.0).astype(np.uint8)


def write_png(image: np.ndarray, path) -> None:
    """Write an 8-bit grayscale or RGB image as PNG."""
    image = np.asarray(image, dtype=np.uint8)
    Image.fromarray(image).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    return np.asarray(Image.open(path))


def write_band_pgm(cube: HyperCube, band: int, path) -> None:
    """Write one band as a 16-bit PGM (values clipped to [0, 1])."""
    if not (0 <= band < cube.bands):
        raise OutOfBounds(f"band {band} outside 0..{cube.bands - 1}")
    write_pgm16(cube.data[band], path)
