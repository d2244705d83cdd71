"""snapcube: demosaicing toolkit for 4x4 snapshot-mosaic hyperspectral
cameras.

Converts single-plane multispectral-filter-array images into
full-resolution 16-band cubes via classical interpolation or a
trainable parallel-path convolutional network, and provides the
surrounding ground-truth production, calibration, metric, and rendering
pipeline.
"""

from .calibration import (
    CrosstalkMatrix,
    apply_mixing,
    crosstalk_correct,
    gaussian_smooth,
    white_correct,
)
from .classical import (
    demosaic_bicubic,
    demosaic_bilinear,
    demosaic_intensity_difference,
)
from .dataset import (
    CorpusConfig,
    CorpusSource,
    PatchCorpus,
    ShiftCapture,
    ShiftCaptureSet,
    adapt_external_cube,
    build_corpus,
    compose_shifted,
    simulate_shift_set,
    synthetic_scene,
)
from .metrics import psnr, psnr_cube, spectral_signature, ssim, ssim_cube
from .model import ModelParams, forward, init_params, load_checkpoint, save_checkpoint
from .mosaic import (
    HyperCube,
    MosaicImage,
    MosaicPattern,
    average_frames,
    cube_to_mosaic,
    extract_patch,
    m2c_resample,
)
from .render import cube_to_rgb, write_band_pgm, write_png
from .trainer import (
    AdamState,
    LossLog,
    MetricsReport,
    TrainConfig,
    adam_step,
    evaluate,
    evaluate_method,
    lr_schedule,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "CorpusConfig",
    "CorpusSource",
    "CrosstalkMatrix",
    "HyperCube",
    "LossLog",
    "MetricsReport",
    "ModelParams",
    "MosaicImage",
    "MosaicPattern",
    "PatchCorpus",
    "ShiftCapture",
    "ShiftCaptureSet",
    "TrainConfig",
    "adam_step",
    "adapt_external_cube",
    "apply_mixing",
    "average_frames",
    "build_corpus",
    "compose_shifted",
    "crosstalk_correct",
    "cube_to_mosaic",
    "cube_to_rgb",
    "demosaic_bicubic",
    "demosaic_bilinear",
    "demosaic_intensity_difference",
    "evaluate",
    "evaluate_method",
    "extract_patch",
    "forward",
    "gaussian_smooth",
    "init_params",
    "load_checkpoint",
    "lr_schedule",
    "m2c_resample",
    "psnr",
    "psnr_cube",
    "save_checkpoint",
    "simulate_shift_set",
    "spectral_signature",
    "ssim",
    "ssim_cube",
    "synthetic_scene",
    "train",
    "white_correct",
    "write_band_pgm",
    "write_png",
]
