"""The parallel-path demosaicing network.

Two feature extractors run side by side on the input mosaic: a learned
mosaic-to-cube convolution (cell-sized kernel, cell-sized stride) and a
parameter-free rearrangement of the mosaic into band planes followed by
four residual blocks.  Their feature maps are concatenated and two
strided transposed convolutions upsample the result back to full
resolution, each followed by ReLU so reflectance stays non-negative.

For a 4x4 pattern and ``[N, 1, H, W]`` input the stages are::

    learned path    [N, 16, H/4, W/4]
    residual path   [N, 16, H/4, W/4]
    concatenated    [N, 32, H/4, W/4]
    upsampler 1     [N, fc, H/2, W/2]   fc = 32 or 128
    upsampler 2     [N, 16, H,   W ]

The forward pass records every intermediate needed by the hand-wired
backward pass in a :class:`ForwardContext`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import (
    ConvSpec,
    DeconvSpec,
    Tensor,
    concat_channels,
    concat_channels_backward,
    conv2d_backward,
    conv2d_forward,
    deconv2d_backward,
    deconv2d_forward,
    relu,
    relu_backward,
)
from .errors import (
    CorruptCheckpoint,
    DimensionNotDivisible,
    InvalidFilterCount,
    NonFiniteValue,
    ShapeMismatch,
    VersionMismatch,
)
from .mosaic import MosaicPattern

CHECKPOINT_MAGIC = b"SNAPCUBE"
CHECKPOINT_VERSION = 1

VALID_FILTER_COUNTS = (32, 128)
RESBLOCK_COUNT = 4
RESBLOCK_CHANNELS = 16


@dataclass
class ResBlock:
    """Two 3x3 convolutions with a ReLU between them and an additive
    skip connection before the final ReLU."""

    conv1: ConvSpec
    conv2: ConvSpec


@dataclass
class ModelParams:
    """Ordered parameter set of the network plus descriptive metadata."""

    m2c_conv: ConvSpec
    res: list[ResBlock]
    deconv1: DeconvSpec
    deconv2: DeconvSpec
    pattern: MosaicPattern
    filter_count: int
    provenance: dict = field(default_factory=dict)

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """Parameters in declaration (serialization) order."""
        out = [
            ("m2c_conv.weights", self.m2c_conv.weights),
            ("m2c_conv.bias", self.m2c_conv.bias),
        ]
        for i, block in enumerate(self.res):
            out.append((f"res{i}.conv1.weights", block.conv1.weights))
            out.append((f"res{i}.conv1.bias", block.conv1.bias))
            out.append((f"res{i}.conv2.weights", block.conv2.weights))
            out.append((f"res{i}.conv2.bias", block.conv2.bias))
        out.append(("deconv1.weights", self.deconv1.weights))
        out.append(("deconv1.bias", self.deconv1.bias))
        out.append(("deconv2.weights", self.deconv2.weights))
        out.append(("deconv2.bias", self.deconv2.bias))
        return out

    @property
    def parameter_count(self) -> int:
        return sum(t.data.size for _, t in self.named_tensors())

    def zero_grad(self) -> None:
        for _, t in self.named_tensors():
            t.zero_grad()


def _uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform(-a, a) with a = 1/sqrt(fan_in); fan_in = in * kh * kw."""
    fan_in = int(np.prod(shape[1:]))
    a = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-a, a, size=shape).astype(np.float32)


def init_params(
    seed: int,
    filter_count: int = 128,
    pattern: MosaicPattern | None = None,
) -> ModelParams:
    """Fresh parameters; weights uniform over +-1/sqrt(fan_in), biases 0."""
    if filter_count not in VALID_FILTER_COUNTS:
        raise InvalidFilterCount(
            f"filter_count must be one of {VALID_FILTER_COUNTS}, got {filter_count}"
        )
    if pattern is None:
        pattern = MosaicPattern.default()
    k = pattern.rows
    bands = pattern.bands
    rng = np.random.default_rng(seed)

    def conv(ci, co, kernel, stride, padding, cls=ConvSpec):
        w = Tensor(_uniform_fan_in(rng, (co, ci, *kernel)), requires_grad=True)
        b = Tensor(np.zeros(co, dtype=np.float32), requires_grad=True)
        return cls(ci, co, kernel, stride, padding, weights=w, bias=b)

    m2c = conv(1, bands, (k, k), stride=k, padding=0)
    res = [
        ResBlock(
            conv1=conv(RESBLOCK_CHANNELS, RESBLOCK_CHANNELS, (3, 3), 1, 1),
            conv2=conv(RESBLOCK_CHANNELS, RESBLOCK_CHANNELS, (3, 3), 1, 1),
        )
        for _ in range(RESBLOCK_COUNT)
    ]
    deconv1 = conv(2 * bands, filter_count, (8, 8), 2, 3, cls=DeconvSpec)
    deconv2 = conv(filter_count, bands, (8, 8), 2, 3, cls=DeconvSpec)
    return ModelParams(
        m2c_conv=m2c,
        res=res,
        deconv1=deconv1,
        deconv2=deconv2,
        pattern=pattern,
        filter_count=filter_count,
        provenance={"init_seed": int(seed)},
    )


def _rearrange_forward(x: np.ndarray, pattern: MosaicPattern) -> np.ndarray:
    """Parameter-free mosaic-to-cube rearrangement on [N,1,H,W] batches."""
    k = pattern.rows
    n, _, h, w = x.shape
    out = np.empty((n, pattern.bands, h // k, w // k), dtype=x.dtype)
    for r in range(k):
        for c in range(k):
            out[:, pattern.band_at[r, c]] = x[:, 0, r::k, c::k]
    return out


def _rearrange_backward(g: np.ndarray, pattern: MosaicPattern) -> np.ndarray:
    k = pattern.rows
    n, bands, h, w = g.shape
    out = np.empty((n, 1, h * k, w * k), dtype=g.dtype)
    for r in range(k):
        for c in range(k):
            out[:, 0, r::k, c::k] = g[:, pattern.band_at[r, c]]
    return out


def _ensure_finite(stage: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        bad = int(np.size(arr) - np.count_nonzero(np.isfinite(arr)))
        raise NonFiniteValue(f"{stage}: {bad} non-finite value(s)")


@dataclass
class ForwardContext:
    """Intermediates recorded by :func:`forward` for the backward pass."""

    x: Tensor
    path_b_in: Tensor
    res_cache: list[tuple[Tensor, Tensor, Tensor, Tensor]]
    cat: Tensor
    u1: Tensor
    u1_act: Tensor
    u2: Tensor
    out: Tensor


def forward(
    params: ModelParams, x, check_finite: bool = True
) -> tuple[Tensor, ForwardContext]:
    """Run the network on a ``[N, 1, H, W]`` mosaic batch.

    Returns the ``[N, bands, H, W]`` prediction and the context for
    :func:`backward`.
    """
    if isinstance(x, np.ndarray):
        x = Tensor(x)
    if x.data.ndim != 4 or x.data.shape[1] != 1:
        raise ShapeMismatch(f"expected [N,1,H,W] input, got {x.data.shape}")
    k = params.pattern.rows
    if x.data.shape[2] % k or x.data.shape[3] % k:
        raise DimensionNotDivisible(
            f"input {x.data.shape[2]}x{x.data.shape[3]} not divisible by {k}"
        )

    # Learned mosaic-to-cube path.
    a_out = conv2d_forward(x, params.m2c_conv)

    # Rearranged path through the residual blocks.
    b = Tensor(_rearrange_forward(x.data, params.pattern))
    path_b_in = b
    res_cache = []
    for block in params.res:
        h1 = conv2d_forward(b, block.conv1)
        a1 = relu(h1)
        h2 = conv2d_forward(a1, block.conv2)
        s = Tensor(b.data + h2.data)
        res_cache.append((b, h1, a1, s))
        b = relu(s)

    cat = concat_channels(a_out, b)
    u1 = deconv2d_forward(cat, params.deconv1)
    u1_act = relu(u1)
    u2 = deconv2d_forward(u1_act, params.deconv2)
    out = relu(u2)
    if check_finite:
        _ensure_finite("forward output", out.data)
    ctx = ForwardContext(
        x=x, path_b_in=path_b_in, res_cache=res_cache,
        cat=cat, u1=u1, u1_act=u1_act, u2=u2, out=out,
    )
    return out, ctx


def backward(
    params: ModelParams,
    ctx: ForwardContext,
    grad_out: np.ndarray,
    need_input_grad: bool = False,
    check_finite: bool = True,
) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter.

    ``grad_out`` is the loss gradient w.r.t. the network output.  Returns
    a dict keyed like :meth:`ModelParams.named_tensors`; when
    ``need_input_grad`` is set the input gradient is stored under
    ``"input"``.
    """
    grads: dict[str, np.ndarray] = {}

    g = relu_backward(grad_out, ctx.u2)
    g, gw, gb = deconv2d_backward(g, ctx.u1_act, params.deconv2)
    grads["deconv2.weights"] = gw
    grads["deconv2.bias"] = gb
    g = relu_backward(g, ctx.u1)
    g, gw, gb = deconv2d_backward(g, ctx.cat, params.deconv1)
    grads["deconv1.weights"] = gw
    grads["deconv1.bias"] = gb

    bands = params.pattern.bands
    g_a, g_b = concat_channels_backward(g, bands)

    for i in reversed(range(len(params.res))):
        block = params.res[i]
        b_in, h1, a1, s = ctx.res_cache[i]
        g_s = relu_backward(g_b, s)
        g_a1, gw, gb = conv2d_backward(g_s, a1, block.conv2)
        grads[f"res{i}.conv2.weights"] = gw
        grads[f"res{i}.conv2.bias"] = gb
        g_h1 = relu_backward(g_a1, h1)
        g_in, gw, gb = conv2d_backward(g_h1, b_in, block.conv1)
        grads[f"res{i}.conv1.weights"] = gw
        grads[f"res{i}.conv1.bias"] = gb
        g_b = g_in + g_s  # skip connection joins both branches

    g_x_a, gw, gb = conv2d_backward(g_a, ctx.x, params.m2c_conv)
    grads["m2c_conv.weights"] = gw
    grads["m2c_conv.bias"] = gb

    if need_input_grad:
        g_x_b = _rearrange_backward(g_b, params.pattern)
        grads["input"] = g_x_a + g_x_b
    if check_finite:
        for name, g_arr in grads.items():
            _ensure_finite(f"backward {name}", g_arr)
    return grads


def save_checkpoint(params: ModelParams, path) -> None:
    """Write a versioned checkpoint: header, metadata JSON, then raw
    little-endian float32 parameter blocks in declaration order."""
    meta = {
        "filter_count": params.filter_count,
        "band_at": params.pattern.band_at.tolist(),
        "wavelengths_nm": params.pattern.wavelengths_nm.tolist(),
        "provenance": params.provenance,
        "tensors": [
            {"name": name, "shape": list(t.data.shape)}
            for name, t in params.named_tensors()
        ],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for _, t in params.named_tensors():
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint(path, expect_filter_count: int | None = None) -> ModelParams:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises :class:`CorruptCheckpoint` on truncation or bad headers and
    :class:`VersionMismatch` when the format version or architecture
    does not match expectations.
    """
    raw = Path(path).read_bytes()
    header = len(CHECKPOINT_MAGIC) + 8
    if len(raw) < header:
        raise CorruptCheckpoint(f"{path}: file shorter than header")
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic")
    version, meta_len = struct.unpack(
        "<II", raw[len(CHECKPOINT_MAGIC) : header]
    )
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"{path}: format version {version}, expected {CHECKPOINT_VERSION}"
        )
    if len(raw) < header + meta_len:
        raise CorruptCheckpoint(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[header : header + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable metadata") from exc

    filter_count = int(meta["filter_count"])
    if expect_filter_count is not None and filter_count != expect_filter_count:
        raise VersionMismatch(
            f"{path}: checkpoint has filter_count {filter_count}, "
            f"expected {expect_filter_count}"
        )
    if filter_count not in VALID_FILTER_COUNTS:
        raise CorruptCheckpoint(f"{path}: invalid filter_count {filter_count}")
    pattern = MosaicPattern(
        band_at=np.asarray(meta["band_at"]),
        wavelengths_nm=np.asarray(meta["wavelengths_nm"]),
    )
    params = init_params(seed=0, filter_count=filter_count, pattern=pattern)
    params.provenance = dict(meta.get("provenance", {}))

    expected = [
        {"name": name, "shape": list(t.data.shape)}
        for name, t in params.named_tensors()
    ]
    if meta["tensors"] != expected:
        raise VersionMismatch(f"{path}: tensor layout does not match architecture")

    offset = header + meta_len
    for name, t in params.named_tensors():
        nbytes = t.data.size * 4
        block = raw[offset : offset + nbytes]
        if len(block) != nbytes:
            raise CorruptCheckpoint(f"{path}: truncated block {name}")
        t.data = np.frombuffer(block, dtype="<f4").reshape(t.data.shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CorruptCheckpoint(f"{path}: {len(raw) - offset} trailing byte(s)")
    return params
