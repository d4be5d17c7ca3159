"""Print data: gloss response curve, layer-stack slicing and gloss dithering."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import isotonic_regression

from . import fileio, kernels
from .errors import CalibrationError, FabricationError, ShapeMismatchError
from .extraction import GlossMap
from .masking import HeightMap

log = logging.getLogger(__name__)

DEFAULT_DPI = 450
DEFAULT_LAYER_UM = 10.0
MIN_LAYER_UM = 2.0
Z_LIMIT_MM = 5.0
GLOSS_LAYERS = 6
INKS = ("C", "M", "Y", "K", "W")
WHITE = 5  # palette index of white ink; 0 is empty
MAX_RESIDUAL_FRACTION = 0.2


@dataclass(frozen=True)
class GlossResponseCurve:
    """Monotone print value -> 60 degree gloss mapping fitted to glossmeter samples."""

    samples: tuple  # ((print_value, g60), ...) as given
    knots_p: np.ndarray
    knots_g: np.ndarray
    increasing: bool
    max_deviation: float  # largest |sample - fit| in GU

    @property
    def g60_min(self) -> float:
        return float(self.knots_g.min())

    @property
    def g60_max(self) -> float:
        return float(self.knots_g.max())

    @property
    def p_range(self) -> tuple[float, float]:
        return float(self.knots_p[0]), float(self.knots_p[-1])

    def __call__(self, p):
        p = np.clip(np.asarray(p, dtype=float), *self.p_range)
        if self.knots_p.size == 1:
            return np.full_like(p, self.knots_g[0])
        if self.knots_p.size == 2:
            return np.interp(p, self.knots_p, self.knots_g)
        return PchipInterpolator(self.knots_p, self.knots_g)(p)

    def inverse(self, g60, iterations: int = 60):
        """Print value reproducing ``g60`` (clamped to the fitted range), by bisection."""
        g = np.clip(np.asarray(g60, dtype=float), self.g60_min, self.g60_max)
        lo = np.full(g.shape, self.p_range[0])
        hi = np.full(g.shape, self.p_range[1])
        sign = 1.0 if self.increasing else -1.0
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            below = sign * (self(mid) - g) < 0
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


def fit_gloss_curve(samples) -> GlossResponseCurve:
    """Fit a monotone curve through (print_value, g60) samples.

    Duplicate print values are averaged, isotonic regression is run in both
    directions and the better one kept, then flat runs are collapsed to one
    knot and a shape-preserving cubic (PCHIP) interpolates the knots. Sample
    order does not matter.
    """
    pts = [(float(p), float(g)) for p, g in samples]
    if len(pts) < 3:
        raise CalibrationError(f"need at least 3 gloss samples, got {len(pts)}")
    arr = np.array(pts)
    if not np.all(np.isfinite(arr)):
        raise CalibrationError("gloss samples must be finite")
    if np.any(arr[:, 0] < 0) or np.any(arr[:, 0] > 100) or np.any(arr[:, 1] < 0):
        raise CalibrationError("print values must lie in [0, 100] and g60 must be >= 0")
    ps, inv = np.unique(arr[:, 0], return_inverse=True)
    if ps.size < 2:
        raise CalibrationError("samples must span at least two print values")
    counts = np.bincount(inv)
    gs = np.bincount(inv, weights=arr[:, 1]) / counts

    fits = []
    for inc in (True, False):
        res = isotonic_regression(gs, weights=counts.astype(float), increasing=inc)
        fits.append((float(np.sum(counts * (res.x - gs) ** 2)), inc, res.x, res.blocks))
    fits.sort(key=lambda f: f[0])
    _, increasing, fitted, blocks = fits[0]

    # one knot per block at the block's mean print value
    kp, kg = [], []
    for start, stop in zip(blocks[:-1], blocks[1:]):
        kp.append(float(np.average(ps[start:stop], weights=counts[start:stop])))
        kg.append(float(fitted[start]))
    # pin the ends of the sampled print range
    if kp[0] > ps[0]:
        kp.insert(0, float(ps[0]))
        kg.insert(0, kg[0])
    if kp[-1] < ps[-1]:
        kp.append(float(ps[-1]))
        kg.append(kg[-1])

    spread = float(np.ptp(arr[:, 1]))
    deviation = np.abs(fitted[inv] - arr[:, 1])
    max_dev = float(deviation.max())
    if spread == 0:
        raise CalibrationError("gloss samples are constant; no response to invert")
    if max_dev > MAX_RESIDUAL_FRACTION * spread:
        raise CalibrationError(
            f"samples do not follow a monotone trend: isotonic residual {max_dev:.2f} GU exceeds "
            f"{MAX_RESIDUAL_FRACTION:.0%} of the sample range ({spread:.2f} GU)"
        )
    curve = GlossResponseCurve(tuple(pts), np.array(kp), np.array(kg), increasing, max_dev)
    log.info("gloss curve: %d knots, %s, max deviation %.3f GU", len(kp), "increasing" if increasing else "decreasing", max_dev)
    return curve


def default_curve_samples():
    """Synthetic 8-point glossmeter table: saturating rise from 8 to 88 GU."""
    ps = [0, 10, 20, 40, 60, 80, 90, 100]
    norm = 1.0 - math.exp(-100.0 / 35.0)
    return [(p, 8.0 + 80.0 * (1.0 - math.exp(-p / 35.0)) / norm) for p in ps]


def default_curve() -> GlossResponseCurve:
    return fit_gloss_curve(default_curve_samples())


def load_curve_csv(path) -> GlossResponseCurve:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["print_value", "g60"]:
            raise CalibrationError(f"{path}: header must be 'print_value,g60'")
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                raise CalibrationError(f"{path}:{i}: malformed row {row!r}") from None
    return fit_gloss_curve(rows)


def write_curve_csv(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["print_value", "g60"])
        for p, g in samples:
            w.writerow([repr(float(p)), repr(float(g))])


def gloss_to_print(gmap, curve: GlossResponseCurve | None) -> np.ndarray:
    """Normalized gloss [0, 1] -> print values [0, 100] via the inverted curve."""
    if curve is None:
        raise FabricationError("no gloss response curve given")
    vals = np.asarray(getattr(gmap, "values", gmap), dtype=float)
    if isinstance(gmap, GlossMap) and not gmap.normalized:
        raise FabricationError("gloss map must be normalized to [0, 1] first")
    v = np.clip(vals, 0.0, 1.0)
    target = curve.g60_min + v * (curve.g60_max - curve.g60_min)
    return np.clip(curve.inverse(target), 0.0, 100.0)


def separate_cmyk(rgb) -> np.ndarray:
    """Ink shares (C, M, Y, K, W) per pixel, summing to 1.

    Complements with full black extraction; whatever coverage remains is
    white ink.
    """
    rgb = np.clip(np.asarray(rgb, dtype=float), 0.0, 1.0)
    cmy = 1.0 - rgb
    k = cmy.min(axis=-1, keepdims=True)
    chroma = cmy - k
    inks = np.concatenate([chroma, k], axis=-1)
    total = inks.sum(axis=-1, keepdims=True)
    inks = np.where(total > 1.0, inks / np.maximum(total, 1e-12), inks)
    white = 1.0 - inks.sum(axis=-1, keepdims=True)
    return np.concatenate([inks, np.maximum(white, 0.0)], axis=-1)


def layer_indices(height, layer_thickness_um: float, z_limit_mm: float = Z_LIMIT_MM) -> np.ndarray:
    """Layer that carries the colour voxel for each pixel: ceil(h / t), at least 1."""
    if not layer_thickness_um > 0:
        raise FabricationError("layer thickness must be positive")
    h = np.asarray(getattr(height, "values", height), dtype=float)
    if np.any(h < 0):
        raise FabricationError("heights must be >= 0; shift by the minimum first")
    top = float(h.max()) if h.size else 0.0
    if top > z_limit_mm:
        raise FabricationError(
            f"relief {top:.3f} mm exceeds the printer Z limit of {z_limit_mm} mm; "
            f"scale heights by at most {z_limit_mm / top:.3f}"
        )
    t_mm = layer_thickness_um / 1000.0
    return np.maximum(1, np.ceil(h / t_mm - 1e-9)).astype(np.int32)


@dataclass
class PrintJob:
    """Layer stack stored compactly: colour layer index and ink class per pixel.

    Layer ``l`` (1-based) holds the colour class where ``layer_index == l``,
    white where ``layer_index > l`` and nothing above.
    """

    layer_index: np.ndarray
    ink_class: np.ndarray  # 1..5 = C, M, Y, K, W
    gloss_layers: np.ndarray  # (6, h, w) uint8
    dpi: int = DEFAULT_DPI
    layer_thickness_um: float = DEFAULT_LAYER_UM
    meta: dict = field(default_factory=dict)

    @property
    def n_color_layers(self) -> int:
        return int(self.layer_index.max()) if self.layer_index.size else 0

    def color_layer(self, level: int) -> np.ndarray:
        out = np.zeros(self.layer_index.shape, dtype=np.uint8)
        out[self.layer_index > level] = WHITE
        here = self.layer_index == level
        out[here] = self.ink_class[here]
        return out

    def voxel_counts(self) -> dict:
        counts = {ink: int(np.count_nonzero(self.ink_class == i + 1)) for i, ink in enumerate(INKS)}
        counts["W"] += int(np.sum(self.layer_index - 1))
        counts["total"] = int(np.sum(self.layer_index))
        counts["gloss"] = [int(np.count_nonzero(g)) for g in self.gloss_layers]
        return counts


def slice_layers(color, height, layer_thickness_um: float = DEFAULT_LAYER_UM, z_limit_mm: float = Z_LIMIT_MM):
    """Return ``(layer_index, ink_class)`` for a colour raster over a height map."""
    rgb = np.asarray(color, dtype=float)
    idx = layer_indices(height, layer_thickness_um, z_limit_mm)
    if rgb.shape[:2] != idx.shape:
        raise ShapeMismatchError(f"color {rgb.shape[:2]} vs height {idx.shape}")
    classes = kernels.vector_error_diffuse(separate_cmyk(rgb)) + 1
    return idx, classes.astype(np.uint8)


def layer_thresholds(shape, seed: int, layer: int) -> np.ndarray:
    rng = np.random.default_rng([seed, layer])
    return 0.5 + 0.5 * (rng.random(shape) - 0.5)


def dither_gloss(print_values, seed: int = 0, jobs: int = 1) -> np.ndarray:
    """Six binary gloss layers; layer 1 is a full flow coat, 2-6 carry matte coverage 1 - P/100."""
    p = np.asarray(print_values, dtype=float)
    if np.any(p < 0) or np.any(p > 100):
        raise FabricationError("print values must lie in [0, 100]")
    cov = 1.0 - p / 100.0
    out = np.empty((GLOSS_LAYERS,) + p.shape, dtype=np.uint8)
    out[0] = 1

    def one(layer):
        return kernels.error_diffuse(cov, layer_thresholds(p.shape, seed, layer))

    layers = range(2, GLOSS_LAYERS + 1)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(one, layers))
    else:
        results = [one(layer) for layer in layers]
    for layer, res in zip(layers, results):
        out[layer - 1] = res
    return out


def build_print_job(color, height, gloss, curve=None, layer_thickness_um: float = DEFAULT_LAYER_UM,
                    dpi: int = DEFAULT_DPI, seed: int = 0, jobs: int = 1, z_limit_mm: float = Z_LIMIT_MM) -> PrintJob:
    curve = curve or default_curve()
    h = np.asarray(getattr(height, "values", height), dtype=float)
    idx, classes = slice_layers(color, h, layer_thickness_um, z_limit_mm)
    pv = gloss_to_print(gloss, curve)
    layers = dither_gloss(pv, seed=seed, jobs=jobs)
    return PrintJob(idx, classes, layers, dpi, layer_thickness_um,
                    {"g60_range": [curve.g60_min, curve.g60_max], "curve_max_deviation": curve.max_deviation})


def write_print_job(job: PrintJob, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for level in range(1, job.n_color_layers + 1):
        name = f"color_L{level:04d}.png"
        fileio.write_palette_png(out / name, job.color_layer(level))
        files.append(name)
    for i, layer in enumerate(job.gloss_layers, start=1):
        name = f"gloss_L{i}.png"
        fileio.write_mask_png(out / name, layer)
        files.append(name)
    manifest = {
        "dpi": job.dpi,
        "layer_thickness_um": job.layer_thickness_um,
        "shape": list(job.layer_index.shape),
        "color_layers": job.n_color_layers,
        "gloss_layers": len(job.gloss_layers),
        "counts": job.voxel_counts(),
        "palette": ["empty", *INKS],
        "checksums": {name: fileio.sha256_file(out / name) for name in files},
        **job.meta,
    }
    fileio.write_json(out / "manifest.json", manifest)
    return manifest


def verify_print_job(out_dir) -> list[str]:
    """Return a list of problems; empty when every file matches the manifest."""
    out = Path(out_dir)
    problems = []
    man_path = out / "manifest.json"
    if not man_path.exists():
        return [f"missing {man_path}"]
    manifest = fileio.read_json(man_path)
    for name, digest in sorted(manifest.get("checksums", {}).items()):
        f = out / name
        if not f.exists():
            problems.append(f"missing {f}")
        elif fileio.sha256_file(f) != digest:
            problems.append(f"checksum mismatch {f}")
    return problems


def read_print_job(out_dir) -> PrintJob:
    """Rebuild a PrintJob from its layer files."""
    out = Path(out_dir)
    manifest = fileio.read_json(out / "manifest.json")
    n = manifest["color_layers"]
    shape = tuple(manifest["shape"])
    idx = np.zeros(shape, dtype=np.int32)
    cls = np.zeros(shape, dtype=np.uint8)
    for level in range(1, n + 1):
        lay = fileio.read_palette_png(out / f"color_L{level:04d}.png")
        # the topmost non-empty voxel of a pixel is its colour voxel
        filled = lay > 0
        idx[filled] = level
        cls[filled] = lay[filled]
    gloss = np.stack([fileio.read_mask_png(out / f"gloss_L{i}.png").astype(np.uint8)
                      for i in range(1, manifest["gloss_layers"] + 1)])
    return PrintJob(idx, cls, gloss, manifest["dpi"], manifest["layer_thickness_um"])
