"""Minimal reverse-mode gradient engine for the demosaicing network.

Exactly the operators the network needs: strided 2-D convolution,
strided transposed convolution, ReLU, channel concatenation, and MSE
loss, each with a hand-written backward.  There is no general tape; the
network wires forward and backward sequences explicitly.

Conventions:

* activations are ``[N, C, H, W]``; convolution is cross-correlation
  (no kernel flip),
* every op computes in the dtype of its input: the float32 production
  pipeline runs float32 BLAS (reduction depth is at most a few thousand
  elements, so accumulated rounding stays below 1e-5 relative), while
  gradient checks pass float64 tensors through the identical code path;
  scalar reductions (losses, bias gradients) always accumulate in
  float64,
* transposed convolution is implemented as the adjoint of convolution,
  so the two share their index arithmetic.

Convolutions flatten sliding windows into one matrix product per batch
chunk; the strided input gradient is decomposed by residue class into
stride-1 correlations with flipped sub-kernels (exactly one multiply
per contributing tap).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ShapeMismatch

__all__ = [
    "Tensor",
    "ConvSpec",
    "DeconvSpec",
    "conv2d_forward",
    "conv2d_backward",
    "deconv2d_forward",
    "deconv2d_backward",
    "relu",
    "relu_backward",
    "concat_channels",
    "concat_channels_backward",
    "mse_loss",
    "mse_backward",
]


@dataclass
class Tensor:
    """N-dimensional value with an optional gradient slot."""

    data: np.ndarray
    requires_grad: bool = False
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def add_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeMismatch(
                f"gradient shape {g.shape} != value shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.astype(self.data.dtype)
        else:
            self.grad = (
                self.grad.astype(np.float64) + g.astype(np.float64)
            ).astype(self.data.dtype)


@dataclass
class ConvSpec:
    """Strided 2-D convolution layer: weights ``[out, in, kh, kw]``."""

    in_channels: int
    out_channels: int
    kernel: tuple[int, int]
    stride: int = 1
    padding: int = 0
    weights: Tensor = field(default=None)  # type: ignore[assignment]
    bias: Tensor = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        kh, kw = self.kernel
        if self.stride < 1 or self.padding < 0 or kh < 1 or kw < 1:
            raise ShapeMismatch(
                f"invalid conv geometry: kernel {self.kernel}, "
                f"stride {self.stride}, padding {self.padding}"
            )
        wshape = (self.out_channels, self.in_channels, kh, kw)
        if self.weights is None:
            self.weights = Tensor(
                np.zeros(wshape, dtype=np.float32), requires_grad=True
            )
        if self.bias is None:
            self.bias = Tensor(
                np.zeros(self.out_channels, dtype=np.float32), requires_grad=True
            )
        if self.weights.shape != wshape:
            raise ShapeMismatch(
                f"weight shape {self.weights.shape} != expected {wshape}"
            )
        if self.bias.shape != (self.out_channels,):
            raise ShapeMismatch(
                f"bias shape {self.bias.shape} != ({self.out_channels},)"
            )

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        return (
            (h + 2 * self.padding - kh) // self.stride + 1,
            (w + 2 * self.padding - kw) // self.stride + 1,
        )


@dataclass
class DeconvSpec(ConvSpec):
    """Transposed convolution layer; same fields, adjoint semantics.

    Output spatial size is ``(in - 1) * stride - 2 * padding + kernel``.
    """

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        oh = (h - 1) * self.stride - 2 * self.padding + kh
        ow = (w - 1) * self.stride - 2 * self.padding + kw
        if oh < 1 or ow < 1:
            raise ShapeMismatch(
                f"deconv output {oh}x{ow} not positive for input {h}x{w}"
            )
        return oh, ow


_COL_BUFFER_BYTES = 256e6  # cap on the per-chunk window buffer


def _pad2d(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _compute_dtype(dtype) -> np.dtype:
    return np.dtype(np.float64 if dtype == np.float64 else np.float32)


def _batch_chunk(n: int, per_sample_cols: int, itemsize: int) -> int:
    per_sample_bytes = per_sample_cols * itemsize
    return max(1, min(n, int(_COL_BUFFER_BYTES // max(per_sample_bytes, 1))))


@numba.njit(cache=True)
def _im2col_fill(xp, kh, kw, stride, ho, wo, out):  # pragma: no cover - jitted
    # out[(c*kh + a)*kw + b, (i*ho + yo)*wo + xo]; the inner loop writes
    # one contiguous destination row segment per (window tap, image row).
    # Unit stride (the polyphase sub-convolutions) degenerates to slice
    # copies; larger strides keep a running source index.
    n, ci = xp.shape[0], xp.shape[1]
    for c in range(ci):
        for a in range(kh):
            for b in range(kw):
                row = (c * kh + a) * kw + b
                for i in range(n):
                    for yo in range(ho):
                        base = (i * ho + yo) * wo
                        src = xp[i, c, yo * stride + a]
                        if stride == 1:
                            out[row, base : base + wo] = src[b : b + wo]
                        else:
                            idx = b
                            for xo in range(wo):
                                out[row, base + xo] = src[idx]
                                idx += stride


def _window_cols(
    xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int, dtype
) -> np.ndarray:
    """Flattened sliding windows, contraction-major:
    ``[ci * kh * kw, n * ho * wo]``."""
    n, ci = xp.shape[0], xp.shape[1]
    out = np.empty((ci * kh * kw, n * ho * wo), dtype=dtype)
    _im2col_fill(np.ascontiguousarray(xp.astype(dtype, copy=False)),
                 kh, kw, stride, ho, wo, out)
    return out


def _cmat_to_nchw(m: np.ndarray, out: np.ndarray) -> None:
    """Reorder ``[C, n*h*w]`` into the ``[n, C, h, w]`` slab ``out``."""
    n, c, h, w = out.shape
    out[...] = m.reshape(c, n, h, w).transpose(1, 0, 2, 3)


def _nchw_to_cmat(x: np.ndarray, dtype) -> np.ndarray:
    """Reorder ``[n, C, h, w]`` into contiguous ``[C, n*h*w]``."""
    n, c, h, w = x.shape
    return np.ascontiguousarray(
        x.transpose(1, 0, 2, 3), dtype=dtype
    ).reshape(c, n * h * w)


def _conv_fwd_core(
    x: np.ndarray, w: np.ndarray, stride: int, padding: int
) -> np.ndarray:
    """Cross-correlation core: one matrix product per batch chunk over
    flattened windows."""
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    ct = _compute_dtype(x.dtype)
    xp = _pad2d(x, padding)
    wmat = w.reshape(co, ci * kh * kw).astype(ct, copy=False)
    out = np.empty((n, co, ho, wo), dtype=ct)
    step = _batch_chunk(n, ho * wo * ci * kh * kw, ct.itemsize)
    for i in range(0, n, step):
        cols = _window_cols(xp[i : i + step], kh, kw, stride, ho, wo, ct)
        y = wmat @ cols  # [co, nc*ho*wo]
        _cmat_to_nchw(y, out[i : i + step])
    return out


def _conv_wgrad_core(
    x: np.ndarray, g: np.ndarray, stride: int, padding: int, kernel: tuple[int, int]
) -> np.ndarray:
    """Gradient of the cross-correlation w.r.t. its weights."""
    n, ci = x.shape[0], x.shape[1]
    co, ho, wo = g.shape[1], g.shape[2], g.shape[3]
    kh, kw = kernel
    ct = _compute_dtype(x.dtype)
    xp = _pad2d(x, padding)
    gw = np.zeros((ci * kh * kw, co), dtype=np.float64)
    step = _batch_chunk(n, ho * wo * ci * kh * kw, ct.itemsize)
    for i in range(0, n, step):
        cols = _window_cols(xp[i : i + step], kh, kw, stride, ho, wo, ct)
        gmat = _nchw_to_cmat(g[i : i + step], ct)  # [co, nc*ho*wo]
        gw += cols @ gmat.T
    return gw.reshape(ci, kh, kw, co).transpose(3, 0, 1, 2)


def _conv_igrad_core(
    g: np.ndarray, w: np.ndarray, stride: int, padding: int, in_hw: tuple[int, int]
) -> np.ndarray:
    """Gradient of the cross-correlation w.r.t. its input (adjoint map).

    Decomposed by output-pixel residue class modulo the stride; each
    class is a stride-1 correlation of the (zero-padded) gradient with a
    flipped sub-kernel, evaluated via :func:`_conv_fwd_core`.
    """
    n, co, ho, wo = g.shape
    _, ci, kh, kw = w.shape
    h, wd = in_hw
    s = stride
    # Swap in/out channel roles; flipping happens per sub-kernel below.
    w_t = w.transpose(1, 0, 2, 3)  # [ci, co, kh, kw]
    gx = np.zeros((n, ci, h, wd), dtype=_compute_dtype(g.dtype))
    for ry in range(s):
        m_y = len(range(ry, kh, s))
        y0 = (ry - padding) % s
        if m_y == 0 or y0 >= h:
            continue
        t_y = (h - y0 + s - 1) // s
        q0 = (y0 + padding - ry) // s
        pad_top = max(0, (m_y - 1) - q0)
        pad_bot = max(0, q0 + t_y - 1 - (ho - 1))
        for rx in range(s):
            m_x = len(range(rx, kw, s))
            x0 = (rx - padding) % s
            if m_x == 0 or x0 >= wd:
                continue
            t_x = (wd - x0 + s - 1) // s
            qx0 = (x0 + padding - rx) // s
            pad_left = max(0, (m_x - 1) - qx0)
            pad_right = max(0, qx0 + t_x - 1 - (wo - 1))
            wsub = w_t[:, :, ry::s, rx::s][:, :, ::-1, ::-1]
            gp = np.pad(
                g, ((0, 0), (0, 0), (pad_top, pad_bot), (pad_left, pad_right))
            )
            full = _conv_fwd_core(gp, wsub, 1, 0)
            r0 = q0 - (m_y - 1) + pad_top
            c0 = qx0 - (m_x - 1) + pad_left
            gx[:, :, y0::s, x0::s] = full[:, :, r0 : r0 + t_y, c0 : c0 + t_x]
    return gx


def _check_4d(x: Tensor, channels: int, what: str) -> None:
    if x.data.ndim != 4:
        raise ShapeMismatch(f"{what} expects [N,C,H,W], got {x.data.shape}")
    if x.data.shape[1] != channels:
        raise ShapeMismatch(
            f"{what} expects {channels} channels, got {x.data.shape[1]}"
        )


def conv2d_forward(x: Tensor, spec: ConvSpec) -> Tensor:
    """Strided cross-correlation plus per-channel bias."""
    _check_4d(x, spec.in_channels, "conv2d")
    y = _conv_fwd_core(x.data, spec.weights.data, spec.stride, spec.padding)
    y += spec.bias.data.astype(np.float64)[None, :, None, None]
    return Tensor(y.astype(x.data.dtype))


def conv2d_backward(
    grad_out: np.ndarray, x: Tensor, spec: ConvSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of :func:`conv2d_forward` w.r.t. input, weights, bias."""
    _check_4d(x, spec.in_channels, "conv2d_backward")
    ho, wo = spec.out_hw(x.data.shape[2], x.data.shape[3])
    if grad_out.shape != (x.data.shape[0], spec.out_channels, ho, wo):
        raise ShapeMismatch(
            f"grad_out shape {grad_out.shape} != "
            f"{(x.data.shape[0], spec.out_channels, ho, wo)}"
        )
    dt = x.data.dtype
    grad_x = _conv_igrad_core(
        grad_out, spec.weights.data, spec.stride, spec.padding,
        (x.data.shape[2], x.data.shape[3]),
    )
    grad_w = _conv_wgrad_core(
        x.data, grad_out, spec.stride, spec.padding, spec.kernel
    )
    grad_b = grad_out.astype(np.float64).sum(axis=(0, 2, 3))
    return grad_x.astype(dt), grad_w.astype(dt), grad_b.astype(dt)


def deconv2d_forward(x: Tensor, spec: DeconvSpec) -> Tensor:
    """Strided transposed convolution plus per-channel bias.

    Computed as the adjoint of the matching convolution: scattering each
    input value through the kernel onto the upsampled grid.
    """
    _check_4d(x, spec.in_channels, "deconv2d")
    # Equivalent convolution maps out_channels -> in_channels.
    wc = spec.weights.data.transpose(1, 0, 2, 3)
    oh, ow = spec.out_hw(x.data.shape[2], x.data.shape[3])
    y = _conv_igrad_core(x.data, wc, spec.stride, spec.padding, (oh, ow))
    y += spec.bias.data.astype(np.float64)[None, :, None, None]
    return Tensor(y.astype(x.data.dtype))


def deconv2d_backward(
    grad_out: np.ndarray, x: Tensor, spec: DeconvSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of :func:`deconv2d_forward`.

    The adjoint swaps roles: the input gradient is a plain convolution
    of ``grad_out`` and the weight gradient correlates ``grad_out``
    windows with the layer input, so both share one window buffer.
    """
    _check_4d(x, spec.in_channels, "deconv2d_backward")
    oh, ow = spec.out_hw(x.data.shape[2], x.data.shape[3])
    n = x.data.shape[0]
    if grad_out.shape != (n, spec.out_channels, oh, ow):
        raise ShapeMismatch(
            f"grad_out shape {grad_out.shape} != "
            f"{(n, spec.out_channels, oh, ow)}"
        )
    dt = x.data.dtype
    ct = _compute_dtype(dt)
    co = spec.out_channels
    ci = spec.in_channels
    kh, kw = spec.kernel
    ho, wo = x.data.shape[2], x.data.shape[3]  # conv-view output dims
    gp = _pad2d(grad_out, spec.padding)
    wmat = (
        spec.weights.data.transpose(1, 0, 2, 3)
        .reshape(ci, co * kh * kw)
        .astype(ct, copy=False)
    )
    grad_x = np.empty((n, ci, ho, wo), dtype=ct)
    gw = np.zeros((co * kh * kw, ci), dtype=np.float64)
    step = _batch_chunk(n, ho * wo * co * kh * kw, ct.itemsize)
    for i in range(0, n, step):
        cols = _window_cols(gp[i : i + step], kh, kw, spec.stride, ho, wo, ct)
        gx = wmat @ cols  # [ci, nc*ho*wo]
        _cmat_to_nchw(gx, grad_x[i : i + step])
        xmat = _nchw_to_cmat(x.data[i : i + step], ct)  # [ci, nc*ho*wo]
        gw += cols @ xmat.T
    grad_w = gw.reshape(co, kh, kw, ci).transpose(0, 3, 1, 2)
    grad_b = grad_out.astype(np.float64).sum(axis=(0, 2, 3))
    return grad_x.astype(dt, copy=False), grad_w.astype(dt), grad_b.astype(dt)


def relu(x: Tensor) -> Tensor:
    """Elementwise ``max(0, x)``."""
    return Tensor(np.maximum(x.data, 0))


def relu_backward(grad_out: np.ndarray, x: Tensor) -> np.ndarray:
    """Pass gradient where the input was positive (subgradient 0 at 0)."""
    return np.where(x.data > 0, grad_out, 0).astype(x.data.dtype)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the channel axis: ``[Ca+Cb, H, W]``."""
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ShapeMismatch("concat expects [N,C,H,W] tensors")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ShapeMismatch(
            f"concat spatial/batch mismatch: {a.data.shape} vs {b.data.shape}"
        )
    return Tensor(np.concatenate([a.data, b.data], axis=1))


def concat_channels_backward(
    grad_out: np.ndarray, ca: int
) -> tuple[np.ndarray, np.ndarray]:
    """Split the gradient back into the two concatenated parts."""
    return grad_out[:, :ca], grad_out[:, ca:]


def mse_loss(pred: Tensor, target: Tensor) -> float:
    """Mean squared error over all elements."""
    if pred.data.shape != target.data.shape:
        raise ShapeMismatch(
            f"pred shape {pred.data.shape} != target {target.data.shape}"
        )
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    return float(np.mean(diff * diff))


def mse_backward(pred: Tensor, target: Tensor) -> np.ndarray:
    """Gradient of :func:`mse_loss` w.r.t. the prediction: ``2(p - o)/N``."""
    if pred.data.shape != target.data.shape:
        raise ShapeMismatch(
            f"pred shape {pred.data.shape} != target {target.data.shape}"
        )
    n = pred.data.size
    g = 2.0 * (
        pred.data.astype(np.float64) - target.data.astype(np.float64)
    ) / n
    return g.astype(pred.data.dtype)
