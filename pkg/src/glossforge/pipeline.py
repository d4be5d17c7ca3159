"""Pipeline stages operating on plain directories.

A *capture set* directory holds one group of files per tile plus
``tiles.json``::

    tiles.json                      tile names, grid positions, nominal offsets
    <tile>_p0.png, <tile>_p90.png   16-bit RGB polarized captures
    <tile>_color.png                16-bit RGB colour capture
    <tile>_white.png                16-bit RGB white reference (optional)
    <tile>_height.gfr               height map in mm
    <tile>_gloss.gfr/.json          gloss map and its scale sidecar
    <tile>_normal.png, _shadow.png  1-bit masks

Each stage writes ``provenance.json`` (config hash, versions, input digests)
next to its outputs. No timestamps or absolute paths are recorded, so reruns
with the same inputs are byte-identical.
"""

from __future__ import annotations

import logging
import math
import platform
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__, fileio
from . import evaluation as ev
from . import fabrication as fab
from . import simulator as sim
from .config import PipelineConfig
from .errors import GlossforgeError
from .extraction import GlossMap, PolarizedPair, correct_gloss, correction_maps, flat_field, joint_range, normalize_gloss, raw_gloss
from .geometry import geometry_maps
from .masking import HeightMap, MaskSet, build_masks, infill
from .stitching import Tile, stitch

log = logging.getLogger(__name__)

STAGES = ("simulate", "extract", "mask", "stitch", "fabricate", "evaluate")


class MissingInputError(GlossforgeError, FileNotFoundError):
    """A stage input file does not exist."""

    def __init__(self, path, stage: str | None = None):
        self.path = str(path)
        self.stage = stage
        super().__init__(f"missing input file: {path}")


class StageError(GlossforgeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


def _need(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(path)
    return path


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def versions() -> dict:
    return {"glossforge": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_provenance(out_dir, stage: str, cfg: PipelineConfig, inputs=(), extra=None) -> None:
    out_dir = Path(out_dir)
    digests = {}
    for p in inputs:
        p = Path(p)
        digests[p.name if p.parent == out_dir else f"{p.parent.name}/{p.name}"] = fileio.sha256_file(p)
    record = {"stage": stage, "config_hash": cfg.hash(), "seed": cfg.seed, "versions": versions(), "inputs": digests}
    if extra:
        record.update(extra)
    fileio.write_json(out_dir / "provenance.json", record)


# -- capture sets ---------------------------------------------------------

@dataclass(frozen=True)
class TileEntry:
    name: str
    grid_pos: tuple[int, int] = (0, 0)
    nominal_offset: tuple[int, int] = (0, 0)
    extra: dict | None = None

    def to_dict(self):
        d = {"name": self.name, "grid_pos": list(self.grid_pos), "nominal_offset": list(self.nominal_offset)}
        if self.extra:
            d.update(self.extra)
        return d


def read_tiles(directory) -> tuple[list[TileEntry], dict]:
    directory = Path(directory)
    index = directory / "tiles.json"
    if index.exists():
        data = fileio.read_json(index)
        entries = []
        for t in data["tiles"]:
            extra = {k: v for k, v in t.items() if k not in ("name", "grid_pos", "nominal_offset")}
            entries.append(TileEntry(t["name"], tuple(t.get("grid_pos", (0, 0))), tuple(t.get("nominal_offset", (0, 0))), extra or None))
        meta = {k: v for k, v in data.items() if k != "tiles"}
        return entries, meta
    # bare directory of capture pairs
    names = sorted(p.name[: -len("_p0.png")] for p in directory.glob("*_p0.png"))
    if not names:
        raise MissingInputError(index)
    return [TileEntry(n) for n in names], {}


def write_tiles(directory, entries, meta=None) -> None:
    data = dict(meta or {})
    data["tiles"] = [e.to_dict() for e in entries]
    fileio.write_json(Path(directory) / "tiles.json", data)


def _copy(src: Path, dst_dir: Path) -> Path:
    dst = dst_dir / src.name
    shutil.copyfile(src, dst)
    return dst


# -- simulate -------------------------------------------------------------

def scene_spec(cfg: PipelineConfig) -> dict:
    s = cfg.simulation
    spec = dict(s.scene) if s.scene else sim.default_scene_spec(s.width, s.height, cfg.seed)
    spec.setdefault("seed", cfg.seed)
    if s.pixel_pitch_um and "pixel_pitch_um" not in spec:
        spec["pixel_pitch_um"] = s.pixel_pitch_um
    if "scanner" not in spec:
        spec["scanner"] = cfg.scanner.to_dict()
    return spec


def _write_capture(out: Path, name: str, scene: sim.SyntheticScene, cfg: PipelineConfig, noise_seed: int) -> dict:
    pair, truth = sim.render_pair(scene, noise_sigma=cfg.simulation.noise_sigma, seed=noise_seed,
                                  light_from=cfg.mask.light_from)
    color, white = sim.render_color(scene, vignette=cfg.simulation.vignette)
    clipped = fileio.write_png16(out / f"{name}_p0.png", pair.i1)
    clipped += fileio.write_png16(out / f"{name}_p90.png", pair.i2)
    clipped += fileio.write_png16(out / f"{name}_color.png", color)
    fileio.write_png16(out / f"{name}_white.png", white)
    pitch = scene.height.pixel_pitch
    fileio.write_gfr(out / f"{name}_height.gfr", scene.height.values, pitch)
    fileio.write_gfr(out / f"{name}_truth_gloss.gfr", scene.rho_s, pitch)
    if clipped:
        log.warning("%s: %d samples clipped to [0, 1] when quantizing", name, clipped)
    return {"clipped_samples": clipped, "noise_clamped": truth.clamped}


def simulate(cfg: PipelineConfig, out_dir, spec: dict | None = None, jobs: int = 1,
             rotations: bool = True) -> Path:
    """Render a master scene cut into a grid of captures, plus four rotation scans."""
    out = Path(out_dir)
    tiles_dir = out / "tiles"
    tiles_dir.mkdir(parents=True, exist_ok=True)
    spec = spec or scene_spec(cfg)
    master = sim.make_scene(spec)
    st = cfg.stitch
    cuts = sim.cut_tiles(master, (st.grid_rows, st.grid_cols), st.overlap, st.jitter, seed=cfg.seed)
    entries = [TileEntry(f"r{c.grid_pos[0]}c{c.grid_pos[1]}", c.grid_pos, c.nominal_offset,
                         {"true_offset": list(c.true_offset)}) for c in cuts]

    def render(i):
        return _write_capture(tiles_dir, entries[i].name, cuts[i].data, cfg, noise_seed=cfg.seed * 1000 + i)

    stats = _map(render, range(len(cuts)), jobs)
    write_tiles(tiles_dir, entries, {"grid": [st.grid_rows, st.grid_cols], "overlap": st.overlap,
                                     "pixel_pitch_um": master.height.pixel_pitch})
    fileio.write_json(out / "scene.json", spec)
    fileio.write_gfr(out / "master_height.gfr", master.height.values, master.height.pixel_pitch)
    fileio.write_gfr(out / "master_gloss.gfr", master.rho_s, master.height.pixel_pitch)
    write_provenance(tiles_dir, "simulate", cfg, extra={"tiles": {e.name: s for e, s in zip(entries, stats)}})

    if rotations:
        rot_dir = out / "rotations"
        rot_dir.mkdir(parents=True, exist_ok=True)
        n = cfg.simulation.rotation_size
        rspec = sim.default_scene_spec(n, n, cfg.seed)
        rspec["pixel_pitch_um"] = 0.85 * cfg.scanner.tile_height * 1000.0 / n
        rspec["scanner"] = cfg.scanner.to_dict()
        base = sim.make_scene(rspec)
        rentries = [TileEntry(f"rot{a}", extra={"rotation_deg": a}) for a in ev.ROTATIONS]

        def render_rot(i):
            return _write_capture(rot_dir, rentries[i].name, sim.rotate_scene(base, i), cfg,
                                  noise_seed=cfg.seed * 1000 + 500 + i)

        rstats = _map(render_rot, range(4), jobs)
        write_tiles(rot_dir, rentries, {"pixel_pitch_um": base.height.pixel_pitch})
        fileio.write_json(rot_dir / "scene.json", rspec)
        write_provenance(rot_dir, "simulate", cfg, extra={"tiles": {e.name: s for e, s in zip(rentries, rstats)}})
    write_provenance(out, "simulate", cfg)
    return out


# -- extract --------------------------------------------------------------

def extract(cfg: PipelineConfig, in_dir, out_dir, jobs: int = 1) -> Path:
    """Polarized pairs -> corrected gloss, jointly normalized over the set."""
    src, out = Path(in_dir), Path(out_dir)
    entries, meta = read_tiles(src)
    out.mkdir(parents=True, exist_ok=True)

    def one(e: TileEntry):
        i1 = fileio.read_png16(_need(src / f"{e.name}_p0.png"))
        i2 = fileio.read_png16(_need(src / f"{e.name}_p90.png"))
        hpath = src / f"{e.name}_height.gfr"
        pitch = fileio.read_gfr(hpath)[1] if hpath.exists() else meta.get("pixel_pitch_um")
        h, w = i1.shape[:2]
        geom = geometry_maps(cfg.scanner, w, h, pixel_pitch_um=pitch or None)
        corrected = correct_gloss(raw_gloss(PolarizedPair(i1, i2)), correction_maps(geom, cfg.scanner))
        return corrected, pitch

    results = _map(one, entries, jobs)
    lo, hi = joint_range([r[0] for r in results])
    inputs = []
    for e, (corrected, pitch) in zip(entries, results):
        g = normalize_gloss(corrected, lo, hi)
        fileio.write_gfr(out / f"{e.name}_gloss.gfr", g.values, pitch or 0.0)
        fileio.write_json(out / f"{e.name}_gloss.json", g.sidecar())
        cpath = src / f"{e.name}_color.png"
        if cpath.exists():
            color = fileio.read_png16(cpath)
            wpath = src / f"{e.name}_white.png"
            if wpath.exists():
                color = flat_field(color, fileio.read_png16(wpath))
            fileio.write_png16(out / f"{e.name}_color.png", color)
        hpath = src / f"{e.name}_height.gfr"
        if hpath.exists():
            _copy(hpath, out)
        inputs += [src / f"{e.name}_p0.png", src / f"{e.name}_p90.png"]
    write_tiles(out, entries, meta)
    write_provenance(out, "extract", cfg, inputs, {"gloss_scale": [lo, hi]})
    return out


# -- mask -----------------------------------------------------------------

def _load_gloss(directory: Path, name: str) -> tuple[GlossMap, float]:
    vals, pitch = fileio.read_gfr(_need(directory / f"{name}_gloss.gfr"))
    side = directory / f"{name}_gloss.json"
    meta = fileio.read_json(side) if side.exists() else {}
    return GlossMap(vals.astype(float), meta.get("scale_min"), meta.get("scale_max"), bool(meta.get("normalized", False))), pitch


def mask(cfg: PipelineConfig, in_dir, out_dir, jobs: int = 1) -> Path:
    """Normal/shadow masks from each tile's height map and local-max infill of the gloss."""
    src, out = Path(in_dir), Path(out_dir)
    entries, meta = read_tiles(src)
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.mask

    def one(e: TileEntry):
        gloss, _ = _load_gloss(src, e.name)
        hvals, pitch = fileio.read_gfr(_need(src / f"{e.name}_height.gfr"))
        masks = build_masks(HeightMap(hvals.astype(float), pitch), math.radians(p.normal_deg),
                            cfg.scanner.theta_mount, p.light_from)
        filled = infill(gloss, masks, p.infill_radius)
        fileio.write_gfr(out / f"{e.name}_gloss.gfr", filled.values, pitch)
        fileio.write_json(out / f"{e.name}_gloss.json", filled.sidecar())
        fileio.write_mask_png(out / f"{e.name}_normal.png", masks.normal_mask)
        fileio.write_mask_png(out / f"{e.name}_shadow.png", masks.shadow_mask)
        _copy(src / f"{e.name}_height.gfr", out)
        if (src / f"{e.name}_color.png").exists():
            _copy(src / f"{e.name}_color.png", out)
        return masks.stats()

    stats = _map(one, entries, jobs)
    write_tiles(out, entries, meta)
    write_provenance(out, "mask", cfg, [src / f"{e.name}_gloss.gfr" for e in entries],
                     {"mask_stats": {e.name: s for e, s in zip(entries, stats)}})
    return out


def load_scan(path):
    """Gloss map and combined mask of one scan.

    ``path`` is either a directory holding ``gloss.gfr`` (and optionally
    ``normal.png``/``shadow.png``) or a file prefix such as ``dir/rot90``.
    """
    path = Path(path)
    if path.is_dir():
        gpath, npath, spath, side = path / "gloss.gfr", path / "normal.png", path / "shadow.png", path / "gloss.json"
    else:
        gpath = Path(f"{path}_gloss.gfr")
        npath, spath, side = Path(f"{path}_normal.png"), Path(f"{path}_shadow.png"), Path(f"{path}_gloss.json")
    vals, _ = fileio.read_gfr(_need(gpath))
    meta = fileio.read_json(side) if side.exists() else {}
    m = np.zeros(vals.shape, dtype=bool)
    for mp in (npath, spath):
        if mp.exists():
            m |= fileio.read_mask_png(mp)
    return GlossMap(vals.astype(float), meta.get("scale_min"), meta.get("scale_max"), bool(meta.get("normalized", False))), m


# -- stitch ---------------------------------------------------------------

def load_tile_grid(directory):
    directory = Path(directory)
    entries, meta = read_tiles(directory)
    rows = 1 + max(e.grid_pos[0] for e in entries)
    cols = 1 + max(e.grid_pos[1] for e in entries)
    grid = [[None] * cols for _ in range(rows)]
    for e in entries:
        gloss, _ = _load_gloss(directory, e.name)
        hvals, pitch = fileio.read_gfr(_need(directory / f"{e.name}_height.gfr"))
        color = fileio.read_png16(_need(directory / f"{e.name}_color.png"))
        grid[e.grid_pos[0]][e.grid_pos[1]] = Tile(color, HeightMap(hvals.astype(float), pitch), gloss,
                                                  tuple(e.grid_pos), tuple(e.nominal_offset))
    missing = [(r, c) for r in range(rows) for c in range(cols) if grid[r][c] is None]
    if missing:
        raise StageError("stitch", f"{directory}: grid is incomplete, missing tiles at {missing}")
    return grid, entries


def stitch_stage(cfg: PipelineConfig, in_dir, out_dir, grid_shape=None) -> Path:
    src, out = Path(in_dir), Path(out_dir)
    grid, entries = load_tile_grid(src)
    if grid_shape and (len(grid), len(grid[0])) != tuple(grid_shape):
        raise StageError("stitch", f"expected a {grid_shape[0]}x{grid_shape[1]} grid, found {len(grid)}x{len(grid[0])}")
    out.mkdir(parents=True, exist_ok=True)
    mosaic = stitch(grid, cfg.stitch.params())
    cov = mosaic.coverage
    height = np.where(cov, mosaic.height, np.nanmin(mosaic.height))
    gloss = np.where(cov, mosaic.gloss, 0.0)
    color = np.where(cov[..., None], mosaic.color, 0.0)
    fileio.write_gfr(out / "mosaic_height.gfr", height, mosaic.pixel_pitch)
    fileio.write_gfr(out / "mosaic_gloss.gfr", gloss, mosaic.pixel_pitch)
    fileio.write_json(out / "mosaic_gloss.json", {"normalized": True, "scale_min": None, "scale_max": None})
    fileio.write_png16(out / "mosaic_color.png", color)
    fileio.write_mask_png(out / "coverage.png", cov)
    names = {tuple(e.grid_pos): e.name for e in entries}
    man = mosaic.manifest()
    for t in man["tiles"]:
        t["name"] = names[tuple(t["grid_pos"])]
    fileio.write_json(out / "manifest.json", man)
    write_provenance(out, "stitch", cfg, [src / f"{e.name}_gloss.gfr" for e in entries])
    return out


# -- fabricate ------------------------------------------------------------

def fabricate(cfg: PipelineConfig, mosaic_dir, out_dir, curve_path=None, jobs: int = 1) -> Path:
    src, out = Path(mosaic_dir), Path(out_dir)
    fp = cfg.fabrication
    curve_path = curve_path or fp.gloss_curve
    curve = fab.load_curve_csv(_need(curve_path)) if curve_path else fab.default_curve()
    hvals, pitch = fileio.read_gfr(_need(src / "mosaic_height.gfr"))
    gvals, _ = fileio.read_gfr(_need(src / "mosaic_gloss.gfr"))
    color = fileio.read_png16(_need(src / "mosaic_color.png"))
    h = hvals.astype(float)
    h = h - h.min()
    job = fab.build_print_job(color, h, GlossMap(gvals.astype(float), normalized=True), curve,
                              fp.layer_thickness_um, fp.dpi, cfg.seed, jobs, fp.z_limit_mm)
    fab.write_print_job(job, out)
    problems = fab.verify_print_job(out)
    if problems:
        raise StageError("fabricate", "; ".join(problems))
    write_provenance(out, "fabricate", cfg, [src / "mosaic_height.gfr", src / "mosaic_gloss.gfr", src / "mosaic_color.png"])
    return out


# -- evaluate -------------------------------------------------------------

def evaluate(cfg: PipelineConfig, scans, out_path, align: bool = False) -> dict:
    """Rotation-consistency report for four scans (0, 90, 180, 270 degrees)."""
    if len(scans) != 4:
        raise StageError("evaluate", f"need 4 scans, got {len(scans)}")
    loaded = [load_scan(s) for s in scans]
    maps = [g for g, _ in loaded]
    masks = [m for _, m in loaded]
    report = ev.consistency_report(maps, masks, align=align)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    data = report.to_dict()
    fileio.write_json(out_path, data)
    stem = out_path.with_suffix("")
    for p in report.pairs:
        ev.write_histogram_csv(Path(f"{stem}_{p.label}.csv"), p)
    fileio.write_json(Path(f"{stem}_plot.json"), ev.plot_data(report))
    return data


# -- whole chain ----------------------------------------------------------

def run_pipeline(cfg: PipelineConfig, out_dir, stages=STAGES, jobs: int = 1) -> dict:
    """Run the requested stages in order; each reads the previous stage's directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise StageError("pipeline", f"unknown stages {unknown}; choose from {list(STAGES)}")
    done = {}
    for stage in STAGES:
        if stage not in stages:
            continue
        log.info("stage %s", stage)
        try:
            if stage == "simulate":
                simulate(cfg, out / "simulate", jobs=jobs)
            elif stage == "extract":
                extract(cfg, _need(out / "simulate" / "tiles"), out / "extract" / "tiles", jobs)
                if (out / "simulate" / "rotations").exists():
                    extract(cfg, out / "simulate" / "rotations", out / "extract" / "rotations", jobs)
            elif stage == "mask":
                mask(cfg, _need(out / "extract" / "tiles"), out / "mask" / "tiles", jobs)
                if (out / "extract" / "rotations").exists():
                    mask(cfg, out / "extract" / "rotations", out / "mask" / "rotations", jobs)
            elif stage == "stitch":
                stitch_stage(cfg, _need(out / "mask" / "tiles"), out / "stitch",
                             (cfg.stitch.grid_rows, cfg.stitch.grid_cols))
            elif stage == "fabricate":
                fabricate(cfg, _need(out / "stitch"), out / "fabricate", jobs=jobs)
            elif stage == "evaluate":
                rot = _need(out / "mask" / "rotations")
                evaluate(cfg, [rot / f"rot{a}" for a in ev.ROTATIONS], out / "evaluate" / "report.json")
        except MissingInputError as exc:
            exc.stage = stage
            raise
        except StageError:
            raise
        except GlossforgeError as exc:
            raise StageError(stage, str(exc)) from exc
        done[stage] = True
    fileio.write_json(out / "pipeline.json", {"stages": [s for s in STAGES if s in stages],
                                              "config": cfg.to_dict(), "config_hash": cfg.hash(),
                                              "versions": versions()})
    return done
