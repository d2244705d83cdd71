"""File formats: raw float32 cubes/mosaics with JSON sidecars, 16-bit
PGM, crosstalk matrices, shift-set manifests, and corpus directories.

Cube/mosaic payloads are raw little-endian float32, band-major; the
sidecar ``<path>.json`` carries the geometry.  A mosaic sidecar embeds
its pattern descriptor::

    {"width": W, "height": H, "bands": 1, "layout": "band-major",
     "dtype": "f32le",
     "pattern": {"rows": 4, "cols": 4, "band_at": [[...]],
                 "wavelengths_nm": [...], "phase": [0, 0]}}
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .calibration import CrosstalkMatrix
from .dataset import (
    PatchCorpus,
    PatchPair,
    ShiftCapture,
    ShiftCaptureSet,
)
from .errors import FileFormatError, ShapeMismatch
from .mosaic import DTYPE, HyperCube, MosaicImage, MosaicPattern

RAW_DTYPE = "<f4"


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def _read_raw(path, count: int) -> np.ndarray:
    data = np.fromfile(path, dtype=RAW_DTYPE)
    if data.size != count:
        raise FileFormatError(
            f"{path}: expected {count} float32 values, found {data.size}"
        )
    return data


def write_cube(cube: HyperCube, path) -> None:
    path = Path(path)
    np.ascontiguousarray(cube.data, dtype=RAW_DTYPE).tofile(path)
    meta = {
        "width": cube.width,
        "height": cube.height,
        "bands": cube.bands,
        "wavelengths_nm": [float(w) for w in cube.wavelengths_nm],
        "layout": "band-major",
        "dtype": "f32le",
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_cube(path) -> HyperCube:
    meta = json.loads(sidecar_path(path).read_text())
    bands, h, w = meta["bands"], meta["height"], meta["width"]
    data = _read_raw(path, bands * h * w).reshape(bands, h, w)
    return HyperCube(data=data, wavelengths_nm=np.asarray(meta["wavelengths_nm"]))


def pattern_to_dict(pattern: MosaicPattern, phase=(0, 0)) -> dict:
    return {
        "rows": pattern.rows,
        "cols": pattern.cols,
        "band_at": pattern.band_at.tolist(),
        "wavelengths_nm": [float(w) for w in pattern.wavelengths_nm],
        "phase": [int(phase[0]), int(phase[1])],
    }


def pattern_from_dict(meta: dict) -> tuple[MosaicPattern, tuple[int, int]]:
    pattern = MosaicPattern(
        band_at=np.asarray(meta["band_at"]),
        wavelengths_nm=np.asarray(meta["wavelengths_nm"]),
    )
    phase = tuple(meta.get("phase", (0, 0)))
    return pattern, (int(phase[0]), int(phase[1]))


def write_mosaic(mi: MosaicImage, path) -> None:
    path = Path(path)
    np.ascontiguousarray(mi.data, dtype=RAW_DTYPE).tofile(path)
    meta = {
        "width": mi.width,
        "height": mi.height,
        "bands": 1,
        "layout": "band-major",
        "dtype": "f32le",
        "pattern": pattern_to_dict(mi.pattern, mi.phase),
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_mosaic(path) -> MosaicImage:
    meta = json.loads(sidecar_path(path).read_text())
    h, w = meta["height"], meta["width"]
    data = _read_raw(path, h * w).reshape(h, w)
    pattern, phase = pattern_from_dict(meta["pattern"])
    return MosaicImage(data=data, pattern=pattern, phase=phase)


# ---------------------------------------------------------------------------
# 16-bit PGM (binary P5, big-endian sample bytes per the format spec)


def write_pgm16(plane: np.ndarray, path) -> None:
    """Write a [0, 1] image as a 16-bit binary PGM."""
    plane = np.asarray(plane)
    if plane.ndim != 2:
        raise ShapeMismatch(f"PGM expects a 2-D image, got {plane.shape}")
    h, w = plane.shape
    samples = np.round(np.clip(plane, 0.0, 1.0) * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(samples.tobytes())


def read_pgm16(path, pattern: MosaicPattern | None = None) -> MosaicImage:
    """Import a 16-bit PGM as a mosaic; values are divided by 65535."""
    raw = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4 and pos < len(raw):
        # skip whitespace and comment lines between header tokens
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if len(fields) != 4 or fields[0] != b"P5":
        raise FileFormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 65535:
        raise FileFormatError(f"{path}: expected 16-bit PGM, maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    samples = np.frombuffer(raw, dtype=">u2", count=h * w, offset=pos)
    if samples.size != h * w:
        raise FileFormatError(f"{path}: truncated pixel data")
    data = (samples.astype(np.float64) / 65535.0).reshape(h, w).astype(DTYPE)
    if pattern is None:
        pattern = MosaicPattern.default()
    return MosaicImage(data=data, pattern=pattern)


# ---------------------------------------------------------------------------
# Crosstalk matrices


def write_crosstalk(m: CrosstalkMatrix, path) -> None:
    Path(path).write_text(
        json.dumps({"size": m.size, "mixing": m.mixing.tolist()}, indent=2)
    )


def read_crosstalk(path) -> CrosstalkMatrix:
    meta = json.loads(Path(path).read_text())
    mixing = np.asarray(meta["mixing"], dtype=np.float64)
    if mixing.shape != (meta["size"], meta["size"]):
        raise ShapeMismatch(
            f"{path}: mixing shape {mixing.shape} != size {meta['size']}"
        )
    return CrosstalkMatrix(mixing=mixing)


# ---------------------------------------------------------------------------
# Shift sets


def write_shift_set(capture_set: ShiftCaptureSet, directory) -> Path:
    """Write captures plus a manifest mapping "dx,dy" to file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {}
    for cap in capture_set.captures:
        dx, dy = cap.shift
        name = f"shift_{dx}_{dy}.raw"
        write_mosaic(cap.image, directory / name)
        entries[f"{dx},{dy}"] = name
    manifest = directory / "shifts.json"
    manifest.write_text(json.dumps({"captures": entries}, indent=2, sort_keys=True))
    return manifest


def read_shift_set(manifest_path) -> ShiftCaptureSet:
    manifest_path = Path(manifest_path)
    meta = json.loads(manifest_path.read_text())
    captures = []
    for key, name in sorted(meta["captures"].items()):
        dx, dy = (int(v) for v in key.split(","))
        captures.append(
            ShiftCapture(
                shift=(dx, dy), image=read_mosaic(manifest_path.parent / name)
            )
        )
    return ShiftCaptureSet(captures=captures)


# ---------------------------------------------------------------------------
# Patch corpora


def write_corpus(corpus: PatchCorpus, directory) -> Path:
    """Write every patch pair and a manifest.json describing them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, pair in enumerate(corpus.pairs):
        stem = f"{pair.split}_{i:05d}"
        mosaic_name = f"{stem}_mosaic.raw"
        cube_name = f"{stem}_cube.raw"
        mi = MosaicImage(data=pair.mosaic[0], pattern=corpus.pattern)
        write_mosaic(mi, directory / mosaic_name)
        write_cube(
            HyperCube(data=pair.cube, wavelengths_nm=corpus.pattern.wavelengths_nm),
            directory / cube_name,
        )
        entries.append(
            {
                "mosaic_path": mosaic_name,
                "cube_path": cube_name,
                "split": pair.split,
                "source_id": pair.source_id,
                "offset": list(pair.offset),
                "provenance": pair.provenance,
            }
        )
    manifest = directory / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "pattern": pattern_to_dict(corpus.pattern),
                "pairs": entries,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return manifest


def read_corpus(manifest_path) -> PatchCorpus:
    manifest_path = Path(manifest_path)
    meta = json.loads(manifest_path.read_text())
    pattern, _ = pattern_from_dict(meta["pattern"])
    corpus = PatchCorpus(pattern=pattern)
    for entry in meta["pairs"]:
        mi = read_mosaic(manifest_path.parent / entry["mosaic_path"])
        cube = read_cube(manifest_path.parent / entry["cube_path"])
        corpus.pairs.append(
            PatchPair(
                mosaic=mi.data[None],
                cube=cube.data,
                split=entry["split"],
                source_id=entry["source_id"],
                offset=tuple(entry["offset"]),
                provenance=entry.get("provenance", "unknown"),
            )
        )
    return corpus
