"""Command-line entry point wiring the modules into pipelines.

Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 numerical failure.  Every run prints its effective configuration;
all randomness is controlled by ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import calibration, classical, dataset, hsio, model, render, trainer
from .errors import NumericalError, SnapcubeError
from .mosaic import MosaicImage, MosaicPattern

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_config(command: str, options: dict) -> None:
    print(f"config[{command}]: "
          + json.dumps(options, sort_keys=True, default=str))


def _read_image(path):
    """Read a cube or a mosaic, deciding by the sidecar band count."""
    meta = json.loads(hsio.sidecar_path(path).read_text())
    if meta.get("bands", 1) == 1 and "pattern" in meta:
        return hsio.read_mosaic(path)
    return hsio.read_cube(path)


def _parse_wavelengths(text: str) -> np.ndarray:
    if text == "default":
        return MosaicPattern.default().wavelengths_nm
    p = Path(text)
    if p.exists():
        return np.asarray(json.loads(p.read_text()), dtype=np.float64)
    return np.asarray([float(v) for v in text.split(",")], dtype=np.float64)


# ---------------------------------------------------------------------------
# Subcommand implementations


def _cmd_dataset(args) -> int:
    if args.dataset_cmd == "compose-shifts":
        shift_set = hsio.read_shift_set(args.manifest)
        cube = dataset.compose_shifted(shift_set)
        hsio.write_cube(cube, args.out)
        print(f"composed cube [{cube.bands}, {cube.height}, {cube.width}] "
              f"-> {args.out}")
    elif args.dataset_cmd == "adapt":
        cube = hsio.read_cube(args.input)
        target = _parse_wavelengths(args.wavelengths)
        out = dataset.adapt_external_cube(cube, target)
        hsio.write_cube(out, args.out)
        print(f"adapted {cube.bands} -> {out.bands} bands -> {args.out}")
    elif args.dataset_cmd == "build":
        cfg_dict = json.loads(Path(args.config).read_text()) if args.config else {}
        flat = bool(cfg_dict.pop("flat", True))
        provenance = str(cfg_dict.pop("provenance", "captured"))
        cfg_dict.setdefault("seed", args.seed)
        cfg = dataset.CorpusConfig(**cfg_dict)
        sources = []
        for raw in sorted(Path(args.sources).glob("*.raw")):
            meta = json.loads(hsio.sidecar_path(raw).read_text())
            if meta.get("bands", 1) <= 1:
                continue
            sources.append(
                dataset.CorpusSource(
                    cube=hsio.read_cube(raw), source_id=raw.stem,
                    flat=flat, provenance=provenance,
                )
            )
        corpus = dataset.build_corpus(sources, cfg)
        manifest = hsio.write_corpus(corpus, args.out)
        print(f"corpus {corpus.counts()} -> {manifest}")
    return EXIT_OK


def _cmd_calib(args) -> int:
    if args.calib_cmd == "white":
        raw = hsio.read_mosaic(args.raw)
        white = hsio.read_mosaic(args.white)
        dark = hsio.read_mosaic(args.dark) if args.dark else None
        out = calibration.white_correct(raw, white, dark)
        hsio.write_mosaic(out, args.out)
    elif args.calib_cmd == "crosstalk":
        cube = hsio.read_cube(args.input)
        matrix = hsio.read_crosstalk(args.matrix)
        hsio.write_cube(calibration.crosstalk_correct(cube, matrix), args.out)
    elif args.calib_cmd == "smooth":
        img = _read_image(args.input)
        out = calibration.gaussian_smooth(img, args.sigma)
        if isinstance(out, MosaicImage):
            hsio.write_mosaic(out, args.out)
        else:
            hsio.write_cube(out, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_demosaic(args) -> int:
    mi = hsio.read_mosaic(args.input)
    if args.method == "bilinear":
        cube = classical.demosaic_bilinear(mi)
    elif args.method == "bicubic":
        cube = classical.demosaic_bicubic(mi)
    elif args.method == "intdiff":
        cube = classical.demosaic_intensity_difference(mi)
    else:
        if not args.checkpoint:
            raise SnapcubeError("--checkpoint is required for --method net")
        params = model.load_checkpoint(args.checkpoint)
        predict = trainer.net_predictor(params)
        from .mosaic import HyperCube

        cube = HyperCube(
            data=predict(mi.data[None]),
            wavelengths_nm=params.pattern.wavelengths_nm,
        )
    hsio.write_cube(cube, args.out)
    print(f"demosaiced ({args.method}) "
          f"[{cube.bands}, {cube.height}, {cube.width}] -> {args.out}")
    return EXIT_OK


def _merge_train_config(args) -> trainer.TrainConfig:
    cfg_dict = {}
    if args.config:
        cfg_dict.update(json.loads(Path(args.config).read_text()))
    overrides = {
        "max_epochs": args.epochs,
        "batch_size": args.batch_size,
        "filter_count": args.filter_count,
        "lr_initial": args.lr_initial,
        "lr_floor": args.lr_floor,
        "decay_epochs": args.decay_epochs,
        "checkpoint_interval": args.checkpoint_interval,
        "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            cfg_dict[key] = value
    cfg_dict.setdefault("seed", 42)
    return trainer.TrainConfig(**cfg_dict)


def _cmd_train(args) -> int:
    cfg = _merge_train_config(args)
    _print_config("train", asdict(cfg))
    corpus = hsio.read_corpus(args.corpus)
    params, loss_log = trainer.train(corpus, cfg, out_dir=args.out)
    best = min(r[3] for r in loss_log.rows)
    print(f"trained {cfg.max_epochs} epoch(s); best selection loss "
          f"{best:.6g}; checkpoints in {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    corpus = hsio.read_corpus(args.corpus)
    pairs = corpus.split(args.split)
    reports = {}
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    wavelengths = corpus.pattern.wavelengths_nm
    for method in methods:
        if method == "net":
            params = model.load_checkpoint(args.checkpoint)
            report = trainer.evaluate(params, pairs)
        else:
            fn = {
                "bilinear": classical.demosaic_bilinear,
                "bicubic": classical.demosaic_bicubic,
                "intdiff": classical.demosaic_intensity_difference,
            }[method]

            def predict(mosaic, fn=fn):
                mi = MosaicImage(data=mosaic[0], pattern=corpus.pattern)
                return fn(mi).data

            report = trainer.evaluate_method(predict, pairs, wavelengths, method)
        reports[method] = report.to_dict()
        print(f"{method}: PSNR {report.mean_psnr:.2f} dB, "
              f"SSIM {report.mean_ssim:.4f} ({len(pairs)} patches)")
    Path(args.out).write_text(json.dumps(reports, indent=2, sort_keys=True))
    print(f"report -> {args.out}")
    return EXIT_OK


def _cmd_render(args) -> int:
    cube = hsio.read_cube(args.input)
    if args.render_cmd == "rgb":
        render.write_png(render.cube_to_rgb(cube), args.out)
    else:
        render.write_band_pgm(cube, args.band, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> _Parser:
    parser = _Parser(
        prog="snapcube",
        description="Snapshot-mosaic hyperspectral demosaicing toolkit",
    )
    parser.add_argument("--seed", type=int, default=42,
                        help="seed for all randomness (default 42)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ds = sub.add_parser("dataset", help="ground-truth production")
    ds_sub = p_ds.add_subparsers(dest="dataset_cmd", required=True)
    p = ds_sub.add_parser("compose-shifts", help="compose a shift set into a cube")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p = ds_sub.add_parser("adapt", help="interpolate a cube onto new wavelengths")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--wavelengths", required=True,
                   help="'default', comma-separated nm values, or a JSON file")
    p.add_argument("--out", required=True)
    p = ds_sub.add_parser("build", help="cut a patch corpus from cubes")
    p.add_argument("--sources", required=True, help="directory of cube .raw files")
    p.add_argument("--config", default=None, help="corpus config JSON")
    p.add_argument("--out", required=True)

    p_cal = sub.add_parser("calib", help="radiometric preprocessing")
    cal_sub = p_cal.add_subparsers(dest="calib_cmd", required=True)
    p = cal_sub.add_parser("white", help="white-reference correction")
    p.add_argument("--raw", required=True)
    p.add_argument("--white", required=True)
    p.add_argument("--dark", default=None)
    p.add_argument("--out", required=True)
    p = cal_sub.add_parser("crosstalk", help="invert spectral crosstalk")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--matrix", required=True)
    p.add_argument("--out", required=True)
    p = cal_sub.add_parser("smooth", help="Gaussian smoothing")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--sigma", type=float, default=1.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("demosaic", help="mosaic to full-resolution cube")
    p.add_argument("--method", required=True,
                   choices=["bilinear", "bicubic", "intdiff", "net"])
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the demosaicing network")
    p.add_argument("--corpus", required=True, help="corpus manifest JSON")
    p.add_argument("--config", default=None, help="train config JSON")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--filter-count", type=int, default=None)
    p.add_argument("--lr-initial", type=float, default=None)
    p.add_argument("--lr-floor", type=float, default=None)
    p.add_argument("--decay-epochs", type=int, default=None)
    p.add_argument("--checkpoint-interval", type=int, default=None)

    p = sub.add_parser("eval", help="score methods against ground truth")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--split", default="test")
    p.add_argument("--methods", default="net",
                   help="comma list of net,bilinear,bicubic,intdiff")
    p.add_argument("--out", required=True)

    p_r = sub.add_parser("render", help="cube to image files")
    r_sub = p_r.add_subparsers(dest="render_cmd", required=True)
    p = r_sub.add_parser("rgb", help="RGB PNG via color matching functions")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p = r_sub.add_parser("band", help="single band as 16-bit PGM")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--band", type=int, required=True)
    p.add_argument("--out", required=True)

    return parser


_HANDLERS = {
    "dataset": _cmd_dataset,
    "calib": _cmd_calib,
    "demosaic": _cmd_demosaic,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    np.random.seed(args.seed)  # library code uses Generators; this is a backstop
    if args.command != "train":  # train prints its merged config itself
        _print_config(
            args.command,
            {k: v for k, v in vars(args).items() if k != "command"},
        )
    try:
        return _HANDLERS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SnapcubeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
