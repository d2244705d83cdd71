"""Image quality metrics (PSNR, SSIM) and spectral-signature extraction.

Cube-level scores are computed per spectral band and averaged over the
bands.  SSIM follows the windowed formulation with an 11x11 Gaussian
window (sigma 1.5) and constants C1 = (0.01 max)^2, C2 = (0.03 max)^2,
evaluated at positions where the window fits entirely inside the image.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import EmptyRegion, ImageTooSmall, ShapeMismatch
from .mosaic import HyperCube

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(
    pred: np.ndarray,
    true: np.ndarray,
    max_val: float = 1.0,
    cap_db: float = PSNR_CAP_DB,
) -> float:
    """Peak signal-to-noise ratio in dB, capped at ``cap_db``."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise ShapeMismatch(f"shape {pred.shape} != {true.shape}")
    if max_val <= 0:
        raise ValueError(f"max_val must be > 0, got {max_val}")
    diff = pred.astype(np.float64) - true.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return cap_db
    return min(cap_db, 10.0 * np.log10(max_val * max_val / mse))


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _local_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    half = len(kernel) // 2
    tmp = ndimage.correlate1d(img, kernel, axis=0, mode="constant")
    tmp = ndimage.correlate1d(tmp, kernel, axis=1, mode="constant")
    return tmp[half:-half, half:-half]  # positions with full support only


def ssim(pred: np.ndarray, true: np.ndarray, max_val: float = 1.0) -> float:
    """Mean structural similarity of two single-band images."""
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ShapeMismatch(f"shape {pred.shape} != {true.shape}")
    if pred.ndim != 2:
        raise ShapeMismatch(f"ssim expects 2-D images, got {pred.shape}")
    if min(pred.shape) < SSIM_WINDOW:
        raise ImageTooSmall(
            f"image {pred.shape} smaller than {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    kernel = _ssim_window()
    c1 = (SSIM_K1 * max_val) ** 2
    c2 = (SSIM_K2 * max_val) ** 2
    mu_x = _local_mean(pred, kernel)
    mu_y = _local_mean(true, kernel)
    var_x = _local_mean(pred * pred, kernel) - mu_x * mu_x
    var_y = _local_mean(true * true, kernel) - mu_y * mu_y
    cov = _local_mean(pred * true, kernel) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def _cube_metric(fn, pred: HyperCube, true: HyperCube, **kwargs):
    if pred.data.shape != true.data.shape:
        raise ShapeMismatch(
            f"cube shape {pred.data.shape} != {true.data.shape}"
        )
    per_band = np.array(
        [fn(pred.data[b], true.data[b], **kwargs) for b in range(pred.bands)]
    )
    return per_band, float(per_band.mean())


def psnr_cube(
    pred: HyperCube, true: HyperCube, max_val: float = 1.0
) -> tuple[np.ndarray, float]:
    """Per-band PSNR values and their arithmetic mean."""
    return _cube_metric(psnr, pred, true, max_val=max_val)


def ssim_cube(
    pred: HyperCube, true: HyperCube, max_val: float = 1.0
) -> tuple[np.ndarray, float]:
    """Per-band SSIM values and their arithmetic mean."""
    return _cube_metric(ssim, pred, true, max_val=max_val)


def spectral_signature(
    cube: HyperCube, mask: np.ndarray
) -> list[tuple[float, float]]:
    """Mean reflectance of the masked region per band, with wavelengths."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (cube.height, cube.width):
        raise ShapeMismatch(
            f"mask shape {mask.shape} != image {(cube.height, cube.width)}"
        )
    n = int(mask.sum())
    if n == 0:
        raise EmptyRegion("mask selects no pixels")
    means = cube.data[:, mask].astype(np.float64).mean(axis=1)
    return [
        (float(wl), float(m)) for wl, m in zip(cube.wavelengths_nm, means)
    ]
