"""Command line entry point: ``glossforge <subcommand> ...``.

Exit codes: 0 success, 1 stage or validation failure, 2 missing input or
bad usage. Set ``GLOSSFORGE_LOG`` (DEBUG, INFO, WARNING, ...) for verbosity.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, fileio
from . import pipeline as pl
from .config import PipelineConfig, load_config
from .errors import ConfigError, GlossforgeError
from .geometry import angular_span, geometry_maps
from .optics import OpticalMedium, brewster_angle, fresnel, unpolarized_residual

log = logging.getLogger("glossforge")


def _setup_logging():
    level = os.environ.get("GLOSSFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _config(args) -> PipelineConfig:
    cfg = load_config(pl._need(args.config)) if getattr(args, "config", None) else PipelineConfig()
    return cfg.with_seed(getattr(args, "seed", None))


def _grid(text: str):
    try:
        r, c = text.lower().split("x")
        return int(r), int(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like RxC, got {text!r}") from None


def _emit(data, out):
    text = fileio.dumps_json(data)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_fresnel(args):
    media = OpticalMedium(n2=args.n2, n1=args.n1)
    theta = brewster_angle(media) if args.angle_deg is None else math.radians(args.angle_deg)
    c = fresnel(theta, media)
    _emit({
        "n1": args.n1, "n2": args.n2, "angle_deg": math.degrees(theta),
        "rs": float(c.rs), "rp": float(c.rp),
        "residual_pct": 100.0 * float(unpolarized_residual(c)),
        "brewster_deg": math.degrees(brewster_angle(media)),
    }, args.out)
    return 0


def cmd_geometry(args):
    cfg = _config(args)
    sc = cfg.scanner
    h, w = (args.height, args.width) if args.width else sc.native_shape
    geom = geometry_maps(sc, w, h, args.pitch)
    lo, hi = angular_span(sc, w, h, args.pitch)
    res = unpolarized_residual(fresnel(geom.theta_j, sc.media))
    summary = {"width": w, "height": h, "theta_min_deg": math.degrees(lo), "theta_max_deg": math.degrees(hi),
               "path_min_mm": float(geom.path_length.min()), "path_max_mm": float(geom.path_length.max()),
               "max_residual_pct": 100.0 * float(np.max(res))}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        pitch = args.pitch or sc.tile_width * 1000.0 / w
        fileio.write_gfr(out / "theta_deg.gfr", np.degrees(geom.theta_j), pitch)
        fileio.write_gfr(out / "path_mm.gfr", geom.path_length, pitch)
        fileio.write_json(out / "geometry.json", summary)
    else:
        _emit(summary, None)
    return 0


def cmd_simulate(args):
    cfg = _config(args)
    spec = fileio.read_json(pl._need(args.spec)) if args.spec else None
    if spec is not None and "seed" not in spec:
        spec["seed"] = cfg.seed
    pl.simulate(cfg, args.out, spec, jobs=args.jobs, rotations=not args.no_rotations)
    return 0


def cmd_extract(args):
    pl.extract(_config(args), pl._need(args.tiles), args.out, args.jobs)
    return 0


def cmd_mask(args):
    pl.mask(_config(args), pl._need(args.tiles), args.out, args.jobs)
    return 0


def cmd_stitch(args):
    cfg = _config(args)
    if args.overlap is not None and not 0 < args.overlap < 1:
        raise ConfigError("overlap must lie in (0, 1)")
    pl.stitch_stage(cfg, pl._need(args.tiles), args.out, args.grid)
    return 0


def cmd_fabricate(args):
    pl.fabricate(_config(args), pl._need(args.mosaic), args.out, args.curve, args.jobs)
    return 0


def cmd_evaluate(args):
    data = pl.evaluate(_config(args), args.scans, args.out, align=args.align)
    for p in data["pairs"]:
        print(f"{p['label']}: mean {p['mean']:+.3f}%  std {p['std']:.3f}%  laplace mu {p['laplace_mu']:+.3f}%  b {p['laplace_b']:.3f}%")
    return 0


def cmd_pipeline(args):
    cfg = _config(args)
    pl.run_pipeline(cfg, args.out, args.stages or pl.STAGES, args.jobs)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers within a stage")

    p = argparse.ArgumentParser(prog="glossforge", description="Gloss capture, stitching and print preparation.")
    p.add_argument("--version", action="version", version=f"glossforge {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("fresnel", parents=[common], help="Fresnel reflectances at one angle")
    s.add_argument("--n2", type=float, default=1.495)
    s.add_argument("--n1", type=float, default=1.0)
    s.add_argument("--angle-deg", type=float, help="incidence angle; default is Brewster's angle")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fresnel)

    s = sub.add_parser("geometry", parents=[common], help="per-pixel mirror angle and path length")
    s.add_argument("--width", type=int)
    s.add_argument("--height", type=int)
    s.add_argument("--pitch", type=float, help="pixel pitch in um")
    s.add_argument("--out")
    s.set_defaults(func=cmd_geometry)

    s = sub.add_parser("simulate", parents=[common], help="render synthetic captures")
    s.add_argument("--spec", help="scene description JSON")
    s.add_argument("--no-rotations", action="store_true", help="skip the four rotation scans")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("extract", parents=[common], help="gloss from polarized pairs")
    s.add_argument("--tiles", required=True, help="capture set directory")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("mask", parents=[common], help="normal/shadow masks and infill")
    s.add_argument("--tiles", required=True, help="extracted capture set directory")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("stitch", parents=[common], help="stitch a grid of tiles")
    s.add_argument("--tiles", required=True)
    s.add_argument("--grid", type=_grid, help="expected grid, e.g. 2x2")
    s.add_argument("--overlap", type=float, help="nominal overlap (informational; offsets come from tiles.json)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stitch)

    s = sub.add_parser("fabricate", parents=[common], help="slice and dither a mosaic into a print job")
    s.add_argument("--mosaic", required=True)
    s.add_argument("--curve", help="gloss curve CSV with a print_value,g60 header")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fabricate)

    s = sub.add_parser("evaluate", parents=[common], help="rotation consistency report")
    s.add_argument("--scans", nargs=4, required=True, metavar=("D0", "D90", "D180", "D270"))
    s.add_argument("--align", action="store_true", help="search residual integer offsets")
    s.add_argument("--out", required=True, help="report JSON path")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("pipeline", parents=[common], help="run several stages in order")
    s.add_argument("--stages", nargs="+", choices=pl.STAGES)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except pl.MissingInputError as exc:
        where = f"[{exc.stage}] " if exc.stage else f"[{args.command}] "
        print(f"error: {where}missing input file: {exc.path}", file=sys.stderr)
        return 2
    except GlossforgeError as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
