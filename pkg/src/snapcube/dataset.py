"""Ground-truth production and training-corpus assembly.

Full-resolution cubes come from three routes:

* composition of one-pixel-shifted mosaic captures
  (:func:`compose_shifted`), the measurement-based route,
* spectral adaptation of external full-spectrum cubes onto the sensor's
  band grid (:func:`adapt_external_cube`),
* the bundled synthetic-scene generator (:func:`synthetic_scene`) for
  self-contained experiments and tests.

:func:`build_corpus` turns full-resolution cubes into aligned
(mosaic patch, ground-truth patch) pairs with train/val/test splits and
no spatial overlap between train and test patches of the same source.

Geometric model of the shift rig: the capture tagged ``(dx, dy)`` images
scene pixel ``(row, col)`` at sensor pixel ``(row + dy, col + dx)``.
For every scene pixel and band there is exactly one shift whose sensor
pixel carries that band's filter, so the sixteen captures together
sample every band everywhere.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .calibration import gaussian_smooth
from .errors import (
    BandCountMismatch,
    EmptyInput,
    IncompleteSet,
    InsufficientArea,
    NonMonotonicWavelengths,
    ShapeMismatch,
    SourceTooSmall,
)
from .mosaic import DTYPE, HyperCube, MosaicImage, MosaicPattern, cube_to_mosaic

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Shifted-capture composition


@dataclass
class ShiftCapture:
    """One mosaic capture tagged with its (dx, dy) rig offset."""

    shift: tuple[int, int]
    image: MosaicImage


@dataclass
class ShiftCaptureSet:
    """Complete set of cell-size^2 shifted captures of one scene."""

    captures: list[ShiftCapture]

    def by_shift(self) -> dict[tuple[int, int], MosaicImage]:
        return {c.shift: c.image for c in self.captures}

    def validate(self) -> MosaicPattern:
        if not self.captures:
            raise IncompleteSet("no captures")
        first = self.captures[0].image
        k = first.pattern.rows
        seen = set()
        for cap in self.captures:
            dx, dy = cap.shift
            if not (0 <= dx < k and 0 <= dy < k):
                raise IncompleteSet(f"shift {cap.shift} outside 0..{k - 1}")
            if cap.shift in seen:
                raise IncompleteSet(f"duplicate shift {cap.shift}")
            seen.add(cap.shift)
            if cap.image.data.shape != first.data.shape:
                raise ShapeMismatch(
                    f"capture {cap.shift} shape {cap.image.data.shape} "
                    f"!= {first.data.shape}"
                )
            if not np.array_equal(cap.image.pattern.band_at, first.pattern.band_at):
                raise ShapeMismatch("captures carry different patterns")
        if len(seen) != k * k:
            raise IncompleteSet(f"expected {k * k} shifts, got {len(seen)}")
        return first.pattern


def meander_order(k: int = 4) -> list[tuple[int, int]]:
    """Boustrophedon traversal of the (dx, dy) shift grid (rig metadata;
    composition keys on the shift tags, not the order)."""
    order = []
    for dy in range(k):
        xs = range(k) if dy % 2 == 0 else range(k - 1, -1, -1)
        order.extend((dx, dy) for dx in xs)
    return order


def compose_shifted(capture_set: ShiftCaptureSet) -> HyperCube:
    """Assemble a full-resolution cube from a complete shift set.

    The output is cropped to the region where all reads are in bounds:
    each spatial dimension shrinks by (cell size - 1).
    """
    pattern = capture_set.validate()
    by_shift = capture_set.by_shift()
    k = pattern.rows
    first = capture_set.captures[0].image
    h, w = first.data.shape
    hv, wv = h - (k - 1), w - (k - 1)
    if hv < 1 or wv < 1:
        raise ShapeMismatch(f"captures {w}x{h} too small to compose")
    out = np.empty((pattern.bands, hv, wv), dtype=DTYPE)
    for r in range(k):
        for c in range(k):
            band = pattern.band_at[r, c]
            for py0 in range(k):
                dy = (r - py0) % k
                for px0 in range(k):
                    dx = (c - px0) % k
                    img = by_shift[(dx, dy)].data
                    out[band, py0::k, px0::k] = img[
                        py0 + dy : hv + dy : k, px0 + dx : wv + dx : k
                    ]
    return HyperCube(data=out, wavelengths_nm=pattern.wavelengths_nm)


def _bilinear_shift(plane: np.ndarray, dy: float, dx: float) -> np.ndarray:
    """Sample ``plane`` at (row - dy, col - dx) with edge clamping."""
    h, w = plane.shape
    rows = np.clip(np.arange(h, dtype=np.float64) - dy, 0, h - 1)
    cols = np.clip(np.arange(w, dtype=np.float64) - dx, 0, w - 1)
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    wr = (rows - r0)[:, None]
    wc = (cols - c0)[None, :]
    p = plane.astype(np.float64)
    top = (1 - wc) * p[np.ix_(r0, c0)] + wc * p[np.ix_(r0, c1)]
    bot = (1 - wc) * p[np.ix_(r1, c0)] + wc * p[np.ix_(r1, c1)]
    return (1 - wr) * top + wr * bot


def simulate_shift_set(
    cube: HyperCube, pattern: MosaicPattern, eps: float = 0.0
) -> ShiftCaptureSet:
    """Synthesize the shifted captures a rig would take of ``cube``.

    With ``eps`` = 0 the integer-shift model is exact and
    :func:`compose_shifted` recovers the cube on the valid region.  A
    nonzero ``eps`` scales every unit shift to ``1 + eps`` pixels
    (bilinear resampling), emulating scene points off the focus plane.
    """
    if cube.bands != pattern.bands:
        raise BandCountMismatch(
            f"cube has {cube.bands} bands, pattern has {pattern.bands}"
        )
    k = pattern.rows
    h, w = cube.height, cube.width
    band_map = pattern.band_at[
        (np.arange(h) % k)[:, None], (np.arange(w) % k)[None, :]
    ]
    rr = np.arange(h)[:, None]
    cc = np.arange(w)[None, :]
    captures = []
    for dx, dy in meander_order(k):
        if eps == 0.0:
            src_r = np.clip(np.arange(h) - dy, 0, h - 1)
            src_c = np.clip(np.arange(w) - dx, 0, w - 1)
            data = cube.data[band_map, src_r[:, None], src_c[None, :]]
        else:
            shifted = np.stack(
                [
                    _bilinear_shift(cube.data[b], dy * (1 + eps), dx * (1 + eps))
                    for b in range(cube.bands)
                ]
            )
            data = shifted[band_map, rr, cc].astype(DTYPE)
        captures.append(
            ShiftCapture(
                shift=(dx, dy),
                image=MosaicImage(data=data, pattern=pattern),
            )
        )
    return ShiftCaptureSet(captures=captures)


# ---------------------------------------------------------------------------
# Spectral adaptation of external cubes


def adapt_external_cube(
    cube: HyperCube, target_wavelengths: np.ndarray
) -> HyperCube:
    """Linearly interpolate a cube onto a new wavelength grid per pixel.

    Targets outside the source range are held at the edge band (logged).
    """
    src = np.asarray(cube.wavelengths_nm, dtype=np.float64)
    tgt = np.asarray(target_wavelengths, dtype=np.float64)
    if not np.all(np.diff(src) > 0):
        raise NonMonotonicWavelengths("source wavelengths must be increasing")
    if not np.all(np.diff(tgt) > 0):
        raise NonMonotonicWavelengths("target wavelengths must be increasing")
    outside = int(np.sum((tgt < src[0]) | (tgt > src[-1])))
    if outside:
        log.warning(
            "adapt_external_cube: %d target band(s) outside source range "
            "[%.1f, %.1f] nm, edge-held", outside, src[0], src[-1],
        )
    out = np.empty((len(tgt), cube.height, cube.width), dtype=DTYPE)
    data = cube.data
    for i, lam in enumerate(tgt):
        j = int(np.clip(np.searchsorted(src, lam, side="right") - 1, 0, len(src) - 2))
        t = (lam - src[j]) / (src[j + 1] - src[j])
        t = float(np.clip(t, 0.0, 1.0))
        if t == 0.0:
            out[i] = data[j]
        elif t == 1.0:
            out[i] = data[j + 1]
        else:
            out[i] = (
                (1.0 - t) * data[j].astype(np.float64)
                + t * data[j + 1].astype(np.float64)
            ).astype(DTYPE)
    return HyperCube(data=out, wavelengths_nm=tgt)


# ---------------------------------------------------------------------------
# Synthetic scenes


def _smooth_spectrum(
    rng: np.random.Generator, wavelengths: np.ndarray
) -> np.ndarray:
    """Random smooth reflectance spectrum in (0, 1): a broad Gaussian bump
    plus a gentle slope over a base level."""
    lo, hi = wavelengths[0], wavelengths[-1]
    base = rng.uniform(0.1, 0.5)
    amp = rng.uniform(0.1, 0.45)
    center = rng.uniform(lo, hi)
    width = rng.uniform(0.2, 0.6) * (hi - lo)
    slope = rng.uniform(-0.15, 0.15)
    x = (wavelengths - lo) / (hi - lo)
    s = base + amp * np.exp(-0.5 * ((wavelengths - center) / width) ** 2)
    s = s + slope * (x - 0.5)
    return np.clip(s, 0.02, 0.98)


def synthetic_scene(
    seed: int,
    height: int = 256,
    width: int = 256,
    wavelengths: np.ndarray | None = None,
    kind: str = "blobs",
) -> HyperCube:
    """Generate a full-spectrum test scene.

    Kinds: ``gradient`` (two materials mixed along a diagonal ramp),
    ``checker`` (two materials on an unaligned tile grid), ``blobs``
    (soft elliptical patches of several materials over a background).
    All produce smooth per-material spectra so bands are strongly
    correlated, as in real reflectance data.
    """
    rng = np.random.default_rng(seed)
    if wavelengths is None:
        wavelengths = MosaicPattern.default().wavelengths_nm
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    bands = len(wavelengths)
    yy = np.linspace(0.0, 1.0, height)[:, None]
    xx = np.linspace(0.0, 1.0, width)[None, :]

    if kind == "gradient":
        s0 = _smooth_spectrum(rng, wavelengths)
        s1 = _smooth_spectrum(rng, wavelengths)
        mix = (yy + xx) / 2.0
        data = (
            s0[:, None, None] * (1.0 - mix)[None] + s1[:, None, None] * mix[None]
        )
    elif kind == "checker":
        s0 = _smooth_spectrum(rng, wavelengths)
        s1 = _smooth_spectrum(rng, wavelengths)
        tile = int(rng.integers(7, 15))  # deliberately unaligned to the cell
        ti = (np.arange(height)[:, None] // tile + np.arange(width)[None, :] // tile) % 2
        data = np.where(
            ti[None].astype(bool), s1[:, None, None], s0[:, None, None]
        )
    elif kind == "blobs":
        background = _smooth_spectrum(rng, wavelengths)
        data = np.broadcast_to(
            background[:, None, None], (bands, height, width)
        ).copy()
        for _ in range(int(rng.integers(6, 12))):
            spec = _smooth_spectrum(rng, wavelengths)
            cy, cx = rng.uniform(0.1, 0.9, size=2)
            ry, rx = rng.uniform(0.05, 0.25, size=2)
            angle = rng.uniform(0, np.pi)
            dy = (yy - cy) / ry
            dx = (xx - cx) / rx
            u = np.cos(angle) * dy + np.sin(angle) * dx
            v = -np.sin(angle) * dy + np.cos(angle) * dx
            d2 = u * u + v * v
            mask = np.clip(2.0 * (1.0 - d2), 0.0, 1.0)  # soft but steep rim
            data = data * (1.0 - mask[None]) + spec[:, None, None] * mask[None]
    else:
        raise ValueError(f"unknown scene kind {kind!r}")
    return HyperCube(
        data=np.clip(data, 0.0, 1.0).astype(DTYPE), wavelengths_nm=wavelengths
    )


# ---------------------------------------------------------------------------
# Corpus assembly


@dataclass
class CorpusSource:
    """One full-resolution ground-truth cube feeding the corpus."""

    cube: HyperCube
    source_id: str
    flat: bool = True  # non-flat scenes get the shift-error smoothing
    provenance: str = "synthetic"  # "captured" | "synthetic"


@dataclass
class CorpusConfig:
    patch_size: int = 100
    train_per_source: int = 25
    val_per_source: int = 0
    test_per_source: int = 10
    seed: int = 42
    smooth_sigma: float = 1.5
    max_attempts: int = 2000


@dataclass
class PatchPair:
    """Aligned mosaic/ground-truth patch pair."""

    mosaic: np.ndarray  # [1, s, s]
    cube: np.ndarray  # [L, s, s]
    split: str
    source_id: str
    offset: tuple[int, int]  # (x0, y0) in the source
    provenance: str


@dataclass
class PatchCorpus:
    pattern: MosaicPattern
    pairs: list[PatchPair] = field(default_factory=list)

    def split(self, name: str) -> list[PatchPair]:
        return [p for p in self.pairs if p.split == name]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for p in self.pairs:
            out[p.split] = out.get(p.split, 0) + 1
        return out


def _rects_overlap(a: tuple[int, int, int], b: tuple[int, int, int]) -> bool:
    """Axis-aligned overlap of two squares given as (x0, y0, size)."""
    ax, ay, asz = a
    bx, by, bsz = b
    return ax < bx + bsz and bx < ax + asz and ay < by + bsz and by < ay + asz


def _sample_offsets(
    rng: np.random.Generator,
    h: int,
    w: int,
    k: int,
    size: int,
    count: int,
    avoid: list[tuple[int, int, int]],
    max_attempts: int,
    label: str,
) -> list[tuple[int, int]]:
    """Pattern-aligned square offsets avoiding the given rectangles."""
    max_x = (w - size) // k
    max_y = (h - size) // k
    placed: list[tuple[int, int]] = []
    attempts = 0
    while len(placed) < count:
        if attempts >= max_attempts:
            raise InsufficientArea(
                f"could not place {count} {label} patch(es) in {w}x{h} "
                f"after {max_attempts} attempts"
            )
        attempts += 1
        x0 = int(rng.integers(0, max_x + 1)) * k
        y0 = int(rng.integers(0, max_y + 1)) * k
        if any(_rects_overlap((x0, y0, size), r) for r in avoid):
            continue
        placed.append((x0, y0))
    return placed


def build_corpus(
    sources: list[CorpusSource], cfg: CorpusConfig, pattern: MosaicPattern | None = None
) -> PatchCorpus:
    """Cut aligned (mosaic, ground truth) patch pairs out of the sources.

    The mosaic side is simulated from the unmodified cube; the ground
    truth of non-flat sources is smoothed (shift-error model), which
    makes the pair diverge by construction -- the divergence is logged.
    Test patches never overlap train/val patches of the same source.
    """
    if not sources:
        raise EmptyInput("no corpus sources")
    if pattern is None:
        pattern = MosaicPattern.default()
    k = pattern.rows
    size = cfg.patch_size
    if size % k:
        raise ShapeMismatch(f"patch_size {size} not a multiple of {k}")
    rng = np.random.default_rng(cfg.seed)
    corpus = PatchCorpus(pattern=pattern)

    for src in sources:
        cube = src.cube
        if cube.bands != pattern.bands:
            raise BandCountMismatch(
                f"source {src.source_id}: {cube.bands} bands != pattern "
                f"{pattern.bands}"
            )
        if cube.height < size or cube.width < size:
            raise SourceTooSmall(
                f"source {src.source_id}: {cube.width}x{cube.height} "
                f"smaller than patch size {size}"
            )
        mosaic_full = cube_to_mosaic(cube, pattern, mode="simulate")
        if src.flat:
            gt = cube
        else:
            gt = gaussian_smooth(cube, cfg.smooth_sigma)
            sim_after = cube_to_mosaic(gt, pattern, mode="simulate")
            div = float(np.mean(np.abs(sim_after.data - mosaic_full.data)))
            log.info(
                "source %s: ground truth smoothed (sigma=%.2f), mean "
                "mosaic/ground-truth divergence %.3g", src.source_id,
                cfg.smooth_sigma, div,
            )

        test_offsets = _sample_offsets(
            rng, cube.height, cube.width, k, size, cfg.test_per_source,
            avoid=[], max_attempts=cfg.max_attempts, label="test",
        )
        test_rects = [(x, y, size) for x, y in test_offsets]
        train_offsets = _sample_offsets(
            rng, cube.height, cube.width, k, size,
            cfg.train_per_source + cfg.val_per_source,
            avoid=test_rects, max_attempts=cfg.max_attempts, label="train",
        )
        labelled = [("test", o) for o in test_offsets]
        labelled += [("train", o) for o in train_offsets[: cfg.train_per_source]]
        labelled += [("val", o) for o in train_offsets[cfg.train_per_source :]]
        for split, (x0, y0) in labelled:
            corpus.pairs.append(
                PatchPair(
                    mosaic=mosaic_full.data[None, y0 : y0 + size, x0 : x0 + size]
                    .astype(DTYPE)
                    .copy(),
                    cube=gt.data[:, y0 : y0 + size, x0 : x0 + size].copy(),
                    split=split,
                    source_id=src.source_id,
                    offset=(x0, y0),
                    provenance=src.provenance,
                )
            )
    counts = corpus.counts()
    log.info(
        "corpus built: %s patches from %d source(s)",
        ", ".join(f"{v} {s}" for s, v in sorted(counts.items())), len(sources),
    )
    return corpus
