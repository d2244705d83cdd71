"""Training loop: Adam with a geometrically decaying learning rate, MSE
objective, seeded shuffling/batching, loss logging, and checkpointing.

One epoch is one pass over the training patches in fixed-size batches.
The learning rate decays geometrically from ``lr_initial`` to
``lr_floor`` over ``decay_epochs`` epochs and stays at the floor
afterwards.  Model selection keeps the parameters with the lowest
held-out loss (or lowest training loss when no held-out split exists).
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import model as net
from .autodiff import Tensor, mse_backward, mse_loss
from .dataset import PatchCorpus, PatchPair
from .errors import (
    EmptyDataset,
    NonFiniteGradient,
    NonFiniteLoss,
    ShapeMismatch,
)
from .metrics import psnr_cube, ssim_cube
from .mosaic import HyperCube

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr_initial: float = 0.001
    lr_floor: float = 0.0001
    decay_epochs: int = 30000
    max_epochs: int = 30000
    batch_size: int = 20
    seed: int = 42
    checkpoint_interval: int = 0  # epochs; 0 disables periodic checkpoints
    patch_size: int = 100
    filter_count: int = 128
    val_fraction: float = 0.1  # carved from train when corpus has no val split
    grad_clip_norm: float | None = 10.0  # None disables clipping
    select_on: str = "val"  # "val" | "train"

    def __post_init__(self):
        if not (0 < self.lr_floor <= self.lr_initial):
            raise ValueError(
                f"need 0 < lr_floor <= lr_initial, got "
                f"{self.lr_floor} / {self.lr_initial}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.decay_epochs < 1:
            raise ValueError(f"decay_epochs must be >= 1, got {self.decay_epochs}")
        if self.select_on not in ("val", "train"):
            raise ValueError(f"select_on must be 'val' or 'train', got {self.select_on}")

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls(**json.loads(Path(path).read_text()))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True))


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and the step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, named: list[tuple[str, Tensor]]) -> "AdamState":
        return cls(
            m={n: np.zeros(t.data.shape, dtype=np.float64) for n, t in named},
            v={n: np.zeros(t.data.shape, dtype=np.float64) for n, t in named},
        )


def adam_step(
    named_params: list[tuple[str, Tensor]],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> None:
    """One Adam update, in place; moments are kept in float64."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, tensor in named_params:
        g = grads[name].astype(np.float64)
        if g.shape != tensor.data.shape:
            raise ShapeMismatch(
                f"{name}: gradient shape {g.shape} != {tensor.data.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"{name}: non-finite gradient at step {state.t}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        tensor.data = (tensor.data.astype(np.float64) - update).astype(
            tensor.data.dtype
        )


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Geometric decay from ``lr_initial`` to ``lr_floor``; constant after
    ``decay_epochs``."""
    if epoch >= cfg.decay_epochs or cfg.lr_initial == cfg.lr_floor:
        return cfg.lr_floor
    ratio = cfg.lr_floor / cfg.lr_initial
    return float(cfg.lr_initial * ratio ** (epoch / cfg.decay_epochs))


def clip_gradients(
    grads: dict[str, np.ndarray], max_norm: float
) -> dict[str, np.ndarray]:
    """Scale all gradients down when their global L2 norm exceeds
    ``max_norm``."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = np.sqrt(total)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {n: (g * scale).astype(g.dtype) for n, g in grads.items()}


@dataclass
class LossLog:
    """Per-epoch record of learning rate and train/validation loss."""

    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    def append(self, epoch: int, lr: float, train_mse: float, val_mse: float):
        self.rows.append((epoch, lr, train_mse, val_mse))

    def to_csv(self) -> str:
        lines = ["epoch,lr,train_mse,val_mse"]
        for epoch, lr, tr, va in self.rows:
            lines.append(f"{epoch},{lr:.10g},{tr:.10g},{va:.10g}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _stack_pairs(pairs: list[PatchPair]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([p.mosaic for p in pairs]).astype(np.float32)
    y = np.stack([p.cube for p in pairs]).astype(np.float32)
    return x, y


def _dataset_loss(params: net.ModelParams, x: np.ndarray, y: np.ndarray,
                  batch_size: int) -> float:
    """Mean MSE over a dataset, computed in fixed-order batches."""
    total = 0.0
    for i in range(0, len(x), batch_size):
        xb, yb = x[i : i + batch_size], y[i : i + batch_size]
        out, _ = net.forward(params, Tensor(xb))
        total += mse_loss(out, Tensor(yb)) * len(xb)
    return total / len(x)


def train(
    corpus: PatchCorpus,
    cfg: TrainConfig,
    params: net.ModelParams | None = None,
    out_dir=None,
) -> tuple[net.ModelParams, LossLog]:
    """Train the network on the corpus train split.

    Returns the parameters with the lowest selection loss and the loss
    log.  When ``out_dir`` is given, periodic and best checkpoints plus
    the loss-log CSV are written there.
    """
    train_pairs = corpus.split("train")
    val_pairs = corpus.split("val")
    if not train_pairs:
        raise EmptyDataset("corpus has no train patches")
    rng = np.random.default_rng(cfg.seed)
    if not val_pairs and cfg.select_on == "val" and cfg.val_fraction > 0:
        n_val = max(1, int(round(len(train_pairs) * cfg.val_fraction)))
        if n_val >= len(train_pairs):
            raise EmptyDataset("validation fraction leaves no training data")
        order = rng.permutation(len(train_pairs))
        val_pairs = [train_pairs[i] for i in order[:n_val]]
        train_pairs = [train_pairs[i] for i in order[n_val:]]
        log.info(
            "carved %d validation patch(es) from %d training patches",
            len(val_pairs), len(val_pairs) + len(train_pairs),
        )

    x_train, y_train = _stack_pairs(train_pairs)
    x_val, y_val = _stack_pairs(val_pairs) if val_pairs else (None, None)

    if params is None:
        params = net.init_params(
            seed=cfg.seed, filter_count=cfg.filter_count, pattern=corpus.pattern
        )
    named = params.named_tensors()
    state = AdamState.for_params(named)
    loss_log = LossLog()
    best_loss = np.inf
    best_params = None
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    n = len(x_train)
    for epoch in range(cfg.max_epochs):
        lr = lr_schedule(epoch, cfg)
        order = rng.permutation(n)
        epoch_loss = 0.0
        for i in range(0, n, cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            xb = Tensor(x_train[idx])
            yb = Tensor(y_train[idx])
            out, ctx = net.forward(params, xb)
            loss = mse_loss(out, yb)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss {loss} at epoch {epoch}")
            epoch_loss += loss * len(idx)
            grads = net.backward(params, ctx, mse_backward(out, yb))
            if cfg.grad_clip_norm:
                grads = clip_gradients(grads, cfg.grad_clip_norm)
            adam_step(named, grads, state, lr)
        train_mse = epoch_loss / n
        if x_val is not None:
            val_mse = _dataset_loss(params, x_val, y_val, cfg.batch_size)
        else:
            val_mse = train_mse
        loss_log.append(epoch, lr, train_mse, val_mse)

        select_loss = val_mse if cfg.select_on == "val" else train_mse
        if select_loss < best_loss:
            best_loss = select_loss
            best_params = copy.deepcopy(params)
        if (
            out_dir is not None
            and cfg.checkpoint_interval > 0
            and (epoch + 1) % cfg.checkpoint_interval == 0
        ):
            net.save_checkpoint(params, out_dir / f"epoch_{epoch + 1:06d}.ckpt")
        if epoch % max(1, cfg.max_epochs // 10) == 0 or epoch == cfg.max_epochs - 1:
            log.info(
                "epoch %d/%d lr %.3g train %.4g val %.4g",
                epoch, cfg.max_epochs, lr, train_mse, val_mse,
            )

    assert best_params is not None
    best_params.provenance.update(
        {
            "epochs": cfg.max_epochs,
            "best_select_loss": float(best_loss),
            "select_on": cfg.select_on,
            "train_patches": int(n),
            "seed": int(cfg.seed),
        }
    )
    if out_dir is not None:
        net.save_checkpoint(best_params, out_dir / "best.ckpt")
        loss_log.write_csv(out_dir / "loss_log.csv")
    return best_params, loss_log


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class ImageReport:
    source_id: str
    offset: tuple[int, int]
    psnr_per_band: list[float]
    ssim_per_band: list[float]
    psnr: float
    ssim: float


@dataclass
class MetricsReport:
    method: str
    images: list[ImageReport]
    mean_psnr: float
    mean_ssim: float

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "images": [
                {
                    "source_id": r.source_id,
                    "offset": list(r.offset),
                    "psnr": r.psnr,
                    "ssim": r.ssim,
                    "psnr_per_band": r.psnr_per_band,
                    "ssim_per_band": r.ssim_per_band,
                }
                for r in self.images
            ],
        }


def net_predictor(params: net.ModelParams):
    """Wrap trained parameters as a mosaic -> cube function."""

    def predict(mosaic: np.ndarray) -> np.ndarray:
        out, _ = net.forward(params, Tensor(mosaic[None]))
        return out.data[0]

    return predict


def evaluate_method(
    predict, pairs: list[PatchPair], wavelengths: np.ndarray, method: str
) -> MetricsReport:
    """Score a mosaic -> cube function against ground truth patches."""
    if not pairs:
        raise EmptyDataset("no evaluation pairs")
    reports = []
    for pair in pairs:
        pred = HyperCube(data=predict(pair.mosaic), wavelengths_nm=wavelengths)
        truth = HyperCube(data=pair.cube, wavelengths_nm=wavelengths)
        psnr_bands, psnr_mean = psnr_cube(pred, truth)
        ssim_bands, ssim_mean = ssim_cube(pred, truth)
        reports.append(
            ImageReport(
                source_id=pair.source_id,
                offset=pair.offset,
                psnr_per_band=[float(v) for v in psnr_bands],
                ssim_per_band=[float(v) for v in ssim_bands],
                psnr=psnr_mean,
                ssim=ssim_mean,
            )
        )
    return MetricsReport(
        method=method,
        images=reports,
        mean_psnr=float(np.mean([r.psnr for r in reports])),
        mean_ssim=float(np.mean([r.ssim for r in reports])),
    )


def evaluate(
    params: net.ModelParams, pairs: list[PatchPair], method: str = "net"
) -> MetricsReport:
    """Score the network on (mosaic, ground truth) pairs."""
    return evaluate_method(
        net_predictor(params), pairs, params.pattern.wavelengths_nm, method
    )
